use crate::error::{Error, Result};
use crate::volume::{Dims, Volume, VoxelData};

use super::Connectivity;

/// Component labels. 0 is background; components are numbered 1..=K in
/// decreasing size, ties going to the component whose first voxel comes
/// earlier in raster order (x fastest, then y, then z).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub dims: Dims,
    pub labels: Vec<u32>,
    /// `sizes[k - 1]` is the voxel count of label `k`.
    pub sizes: Vec<usize>,
}

impl LabelMap {
    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    /// Indicator of a single label.
    pub fn component_bits(&self, label: u32) -> Vec<u8> {
        self.labels.iter().map(|&l| (l == label) as u8).collect()
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return ra;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

pub fn connected_components(mask: &Volume, connectivity: Connectivity) -> LabelMap {
    match mask.data() {
        VoxelData::U8(bits) if bits.iter().all(|&b| b <= 1) => {
            connected_components_bits(bits, mask.dims(), connectivity)
        }
        _ => connected_components_bits(&mask.to_binary(), mask.dims(), connectivity),
    }
}

/// Two-pass union-find labelling followed by a canonical relabel.
pub fn connected_components_bits(bits: &[u8], dims: Dims, connectivity: Connectivity) -> LabelMap {
    let [nx, ny, nz] = dims.0;
    // neighbours already visited in raster order
    let back: Vec<[i64; 3]> = connectivity
        .offsets()
        .into_iter()
        .filter(|d| d[2] < 0 || (d[2] == 0 && (d[1] < 0 || (d[1] == 0 && d[0] < 0))))
        .collect();
    let stride = [1i64, nx as i64, (nx * ny) as i64];
    let back_lin: Vec<i64> = back
        .iter()
        .map(|d| d[0] * stride[0] + d[1] * stride[1] + d[2] * stride[2])
        .collect();

    const NONE: u32 = u32::MAX;
    let mut prov = vec![NONE; bits.len()];
    let mut uf = UnionFind { parent: Vec::new() };
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = dims.index(x, y, z);
                if bits[i] == 0 {
                    continue;
                }
                let interior = x > 0 && x + 1 < nx && y > 0 && y + 1 < ny && z > 0;
                let mut label = NONE;
                for (k, d) in back.iter().enumerate() {
                    if !interior {
                        let p = [x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]];
                        if !dims.contains(p) {
                            continue;
                        }
                    }
                    let j = (i as i64 + back_lin[k]) as usize;
                    let l = prov[j];
                    if l == NONE {
                        continue;
                    }
                    label = if label == NONE { l } else { uf.union(label, l) };
                }
                prov[i] = if label == NONE { uf.make() } else { label };
            }
        }
    }

    // resolve roots, record size and first raster index per root
    let nprov = uf.parent.len();
    let mut root_of = vec![0u32; nprov];
    for l in 0..nprov as u32 {
        root_of[l as usize] = uf.find(l);
    }
    let mut size = vec![0usize; nprov];
    let mut first = vec![usize::MAX; nprov];
    for (i, &l) in prov.iter().enumerate() {
        if l != NONE {
            let r = root_of[l as usize] as usize;
            size[r] += 1;
            if first[r] == usize::MAX {
                first[r] = i;
            }
        }
    }
    let mut roots: Vec<usize> = (0..nprov).filter(|&r| size[r] > 0).collect();
    roots.sort_by(|&a, &b| size[b].cmp(&size[a]).then(first[a].cmp(&first[b])));
    let mut final_label = vec![0u32; nprov];
    for (k, &r) in roots.iter().enumerate() {
        final_label[r] = k as u32 + 1;
    }
    let labels = prov
        .iter()
        .map(|&l| if l == NONE { 0 } else { final_label[root_of[l as usize] as usize] })
        .collect();
    let sizes = roots.iter().map(|&r| size[r]).collect();
    LabelMap {
        dims,
        labels,
        sizes,
    }
}

/// Keep only the largest connected component (label 1) as a u8 0/1 mask.
pub fn largest_component(mask: &Volume, connectivity: Connectivity) -> Result<Volume> {
    let lm = connected_components(mask, connectivity);
    if lm.num_components() == 0 {
        return Err(Error::EmptyMask);
    }
    mask.like(VoxelData::U8(lm.component_bits(1)))
}
