use crate::volume::{Dims, Volume, VoxelData};

/// Squared distance (mm²) to, and linear index of, the nearest site for
/// every voxel. `nearest[i] == usize::MAX` and `sq_dist[i] == inf` when the
/// volume holds no site at all.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    pub sq_dist: Vec<f64>,
    pub nearest: Vec<usize>,
}

/// Exact Euclidean feature transform with per-axis spacing.
///
/// Separable lower-envelope-of-parabolas passes along x, then y, then z.
/// Each pass adds `((q - v) * spacing)^2` to the partial sum carried from the
/// previous axis, so the distances come out as
/// `((dx*sx)^2 + (dy*sy)^2) + (dz*sz)^2`.
pub fn nearest_site_transform(sites: &[u8], dims: Dims, spacing: [f64; 3]) -> FeatureTransform {
    let n = dims.len();
    let mut sq_dist: Vec<f64> = sites
        .iter()
        .map(|&s| if s != 0 { 0.0 } else { f64::INFINITY })
        .collect();
    let mut nearest: Vec<usize> = (0..n)
        .map(|i| if sites[i] != 0 { i } else { usize::MAX })
        .collect();

    let [nx, ny, nz] = dims.0;
    let longest = nx.max(ny).max(nz);
    let mut line = LineScratch::new(longest);
    let strides = [1usize, nx, nx * ny];
    for axis in 0..3 {
        let len = dims.0[axis];
        let step = strides[axis];
        let starts: Vec<usize> = match axis {
            0 => (0..nz).flat_map(|z| (0..ny).map(move |y| dims.index(0, y, z))).collect(),
            1 => (0..nz).flat_map(|z| (0..nx).map(move |x| dims.index(x, 0, z))).collect(),
            _ => (0..ny).flat_map(|y| (0..nx).map(move |x| dims.index(x, y, 0))).collect(),
        };
        for start in starts {
            line.load(&sq_dist, &nearest, start, step, len);
            line.transform(len, spacing[axis]);
            line.store(&mut sq_dist, &mut nearest, start, step, len);
        }
    }
    FeatureTransform { sq_dist, nearest }
}

struct LineScratch {
    f: Vec<f64>,
    feat: Vec<usize>,
    out_f: Vec<f64>,
    out_feat: Vec<usize>,
    // lower envelope: parabola apex positions and boundaries
    v: Vec<usize>,
    z: Vec<f64>,
}

impl LineScratch {
    fn new(n: usize) -> Self {
        LineScratch {
            f: vec![0.0; n],
            feat: vec![0; n],
            out_f: vec![0.0; n],
            out_feat: vec![0; n],
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    fn load(&mut self, d: &[f64], nearest: &[usize], start: usize, step: usize, len: usize) {
        for q in 0..len {
            self.f[q] = d[start + q * step];
            self.feat[q] = nearest[start + q * step];
        }
    }

    fn store(&self, d: &mut [f64], nearest: &mut [usize], start: usize, step: usize, len: usize) {
        for q in 0..len {
            d[start + q * step] = self.out_f[q];
            nearest[start + q * step] = self.out_feat[q];
        }
    }

    /// 1D squared-distance transform of `f` with sample spacing `s`.
    fn transform(&mut self, len: usize, s: f64) {
        let s2 = s * s;
        let f = &self.f;
        let mut k: isize = -1;
        for q in 0..len {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + s2 * (q * q) as f64;
            loop {
                if k < 0 {
                    k = 0;
                    self.v[0] = q;
                    self.z[0] = f64::NEG_INFINITY;
                    self.z[1] = f64::INFINITY;
                    break;
                }
                let vk = self.v[k as usize];
                let fv = f[vk] + s2 * (vk * vk) as f64;
                let sect = (fq - fv) / (2.0 * s2 * (q - vk) as f64);
                if sect <= self.z[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                self.v[k as usize] = q;
                self.z[k as usize] = sect;
                self.z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
        if k < 0 {
            for q in 0..len {
                self.out_f[q] = f64::INFINITY;
                self.out_feat[q] = usize::MAX;
            }
            return;
        }
        let mut j = 0usize;
        for q in 0..len {
            while self.z[j + 1] < q as f64 {
                j += 1;
            }
            let mut v = self.v[j];
            let mut best = f[v] + sq_step(q, v, s);
            // Near an envelope boundary several sites can tie in exact
            // arithmetic yet round differently; take the rounded minimum.
            let qf = q as f64;
            if qf - self.z[j] <= BOUNDARY_TOL || self.z[j + 1] - qf <= BOUNDARY_TOL {
                let reach = (best.sqrt() / s).ceil() as usize + 1;
                for w in q.saturating_sub(reach)..len.min(q + reach + 1) {
                    if f[w].is_finite() {
                        let c = f[w] + sq_step(q, w, s);
                        if c < best {
                            best = c;
                            v = w;
                        }
                    }
                }
            }
            self.out_f[q] = best;
            self.out_feat[q] = self.feat[v];
        }
    }
}

/// Distance, in samples, below which a query counts as sitting on an
/// envelope boundary.
const BOUNDARY_TOL: f64 = 1e-6;

fn sq_step(q: usize, v: usize, s: f64) -> f64 {
    let d = (q as f64 - v as f64) * s;
    d * d
}

/// Euclidean distance (mm) from each foreground voxel to the nearest
/// background voxel of the volume; 0 on background. Voxels outside the
/// grid do not count as background.
pub fn distance_transform_bits(bits: &[u8], dims: Dims, spacing: [f64; 3]) -> Vec<f64> {
    let background: Vec<u8> = bits.iter().map(|&b| (b == 0) as u8).collect();
    nearest_site_transform(&background, dims, spacing)
        .sq_dist
        .into_iter()
        .map(f64::sqrt)
        .collect()
}

/// [`distance_transform_bits`] on a mask volume, stored as float-32.
pub fn distance_transform(mask: &Volume) -> Volume {
    let d = distance_transform_bits(&mask.to_binary(), mask.dims(), mask.spacing());
    mask.like(VoxelData::F32(d.into_iter().map(|x| x as f32).collect()))
        .expect("same geometry")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxel() {
        let dims = Dims::new(3, 3, 3);
        let mut bits = vec![0u8; 27];
        bits[13] = 1;
        let d = distance_transform_bits(&bits, dims, [1.0; 3]);
        assert_eq!(d[13], 1.0);
        assert!(d.iter().enumerate().all(|(i, &x)| i == 13 || x == 0.0));
    }

    #[test]
    fn cube_centre() {
        let dims = Dims::new(7, 7, 7);
        let mut bits = vec![0u8; dims.len()];
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    bits[dims.index(x, y, z)] = 1;
                }
            }
        }
        let d = distance_transform_bits(&bits, dims, [1.0; 3]);
        assert_eq!(d[dims.index(3, 3, 3)], 3.0);
        assert_eq!(d[dims.index(1, 3, 3)], 1.0);
    }

    #[test]
    fn no_background_is_infinite() {
        let dims = Dims::new(2, 2, 2);
        let d = distance_transform_bits(&[1; 8], dims, [1.0; 3]);
        assert!(d.iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn anisotropic_line() {
        let dims = Dims::new(1, 1, 5);
        let bits = [0, 1, 1, 1, 0];
        let d = distance_transform_bits(&bits, dims, [1.0, 1.0, 0.5]);
        assert_eq!(d, vec![0.0, 0.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn nearest_site_is_reported() {
        let dims = Dims::new(5, 1, 1);
        let ft = nearest_site_transform(&[1, 0, 0, 0, 1], dims, [1.0; 3]);
        assert_eq!(ft.nearest, vec![0, 0, 0, 4, 4]);
        assert_eq!(ft.sq_dist, vec![0.0, 1.0, 4.0, 1.0, 0.0]);
    }

    #[test]
    fn tied_sites_take_the_rounded_minimum() {
        // offsets (5, 0) and (3, 4) are equally far but round differently
        let dims = Dims::new(6, 5, 1);
        let mut sites = vec![0u8; dims.len()];
        sites[dims.index(0, 4, 0)] = 1;
        sites[dims.index(2, 0, 0)] = 1;
        let s = 0.7;
        let term = |d: f64| (d * s) * (d * s);
        let want = (term(5.0) + term(0.0)).min(term(3.0) + term(4.0));
        let ft = nearest_site_transform(&sites, dims, [s, s, 1.0]);
        assert_eq!(ft.sq_dist[dims.index(5, 4, 0)].to_bits(), want.to_bits());
    }
}
