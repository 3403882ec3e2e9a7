use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{Volume, VoxelData};

use super::{
    build_centerline_graph, connected_components_bits, distance_transform_bits, nearest_site_transform,
    skeletonize_bits, CenterlineGraph, Connectivity,
};

pub const REGION_BACKGROUND: u8 = 0;
pub const REGION_MAIN: u8 = 1;
pub const REGION_BRANCH: u8 = 2;

/// Voxel regions: 0 background, 1 main artery, 2 branch.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabelMap(Volume);

impl RegionLabelMap {
    /// Accepts any stored kind whose values are all 0, 1 or 2.
    pub fn new(v: Volume) -> Result<Self> {
        let mut labels = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let x = v.get_f64(i);
            if x == 0.0 || x == 1.0 || x == 2.0 {
                labels.push(x as u8);
            } else {
                return Err(Error::RegionNotPartition(format!("voxel {i} has region value {x}")));
            }
        }
        Ok(RegionLabelMap(v.like(VoxelData::U8(labels))?))
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    pub fn labels(&self) -> &[u8] {
        self.0.as_u8().expect("stored as u8")
    }

    pub fn count(&self, region: u8) -> usize {
        self.labels().iter().filter(|&&l| l == region).count()
    }

    /// Check that the non-background regions cover exactly the foreground
    /// of `mask`.
    pub fn check_partitions(&self, mask: &Volume) -> Result<()> {
        if self.0.shape() != mask.shape() {
            return Err(Error::ShapeMismatch(self.0.shape(), mask.shape()));
        }
        for (i, &l) in self.labels().iter().enumerate() {
            let fg = mask.get_f64(i) != 0.0;
            if fg != (l != REGION_BACKGROUND) {
                return Err(Error::RegionNotPartition(format!(
                    "voxel {i}: mask={} region={l}",
                    fg as u8
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions {
    /// Edges whose mean radius is at least `alpha * r_max` may belong to the
    /// main trunk.
    pub alpha: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { alpha: 0.5 }
    }
}

pub fn decompose_main_vs_branches(mask: &Volume, alpha: f64) -> Result<RegionLabelMap> {
    decompose_with(mask, DecomposeOptions { alpha }).map(|(r, _)| r)
}

/// Split the mask into main trunk and branches.
///
/// The largest 26-connected component is thinned and turned into a
/// centerline graph with distance-map radii. Starting from the root, the
/// main trunk is grown over edges whose mean radius reaches
/// `alpha * r_max`; every other edge is branch. Each voxel of the component
/// takes the region of its nearest skeleton voxel. Voxels of smaller
/// components are branch. Also returns the centerline graph.
pub fn decompose_with(mask: &Volume, opts: DecomposeOptions) -> Result<(RegionLabelMap, CenterlineGraph)> {
    if !(opts.alpha >= 0.0 && opts.alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", opts.alpha)));
    }
    let dims = mask.dims();
    let bits = mask.to_binary();
    let lm = connected_components_bits(&bits, dims, Connectivity::TwentySix);
    if lm.num_components() == 0 {
        return Err(Error::EmptyMask);
    }
    let main_comp = lm.component_bits(1);
    let distances = distance_transform_bits(&main_comp, dims, mask.spacing());
    let skeleton = skeletonize_bits(&main_comp, dims);
    let graph = build_centerline_graph(&skeleton, dims, &distances)?;

    let threshold = opts.alpha * graph.max_radius();
    let mut main_node = vec![false; graph.nodes.len()];
    let mut main_edge = vec![false; graph.edges.len()];
    main_node[graph.root] = true;
    let mut queue = VecDeque::from([graph.root]);
    while let Some(n) = queue.pop_front() {
        for (k, e) in graph.incident_edges(n) {
            if main_edge[k] || graph.edge_mean_radius(e) < threshold {
                continue;
            }
            main_edge[k] = true;
            let other = if e.a == n { e.b } else { e.a };
            if !main_node[other] {
                main_node[other] = true;
                queue.push_back(other);
            }
        }
    }

    let mut skel_region = vec![REGION_BACKGROUND; bits.len()];
    for (id, node) in graph.nodes.iter().enumerate() {
        let r = if main_node[id] { REGION_MAIN } else { REGION_BRANCH };
        for &v in &node.voxels {
            skel_region[v] = r;
        }
    }
    for (k, e) in graph.edges.iter().enumerate() {
        let r = if main_edge[k] { REGION_MAIN } else { REGION_BRANCH };
        for &v in &e.voxels {
            skel_region[v] = r;
        }
    }

    let ft = nearest_site_transform(&skeleton, dims, mask.spacing());
    let labels: Vec<u8> = (0..bits.len())
        .map(|i| {
            if bits[i] == 0 {
                REGION_BACKGROUND
            } else if main_comp[i] == 0 {
                REGION_BRANCH
            } else {
                skel_region[ft.nearest[i]]
            }
        })
        .collect();
    Ok((RegionLabelMap(mask.like(VoxelData::U8(labels))?), graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    #[test]
    fn region_map_validation() {
        let v = Volume::from_u8(Dims::new(3, 1, 1), [1.0; 3], vec![0, 1, 3]).unwrap();
        assert!(matches!(RegionLabelMap::new(v), Err(Error::RegionNotPartition(_))));
        let v = Volume::from_i16(Dims::new(3, 1, 1), [1.0; 3], vec![0, 1, 2]).unwrap();
        let r = RegionLabelMap::new(v).unwrap();
        let gt = Volume::from_u8(Dims::new(3, 1, 1), [1.0; 3], vec![0, 1, 1]).unwrap();
        r.check_partitions(&gt).unwrap();
        let bad = Volume::from_u8(Dims::new(3, 1, 1), [1.0; 3], vec![1, 1, 1]).unwrap();
        assert!(r.check_partitions(&bad).is_err());
    }

    #[test]
    fn empty_mask() {
        let v = Volume::from_u8(Dims::new(3, 3, 3), [1.0; 3], vec![0; 27]).unwrap();
        assert!(matches!(decompose_main_vs_branches(&v, 0.5), Err(Error::EmptyMask)));
    }

    #[test]
    fn detached_blob_is_branch() {
        let dims = Dims::new(20, 9, 9);
        let mut bits = vec![0u8; dims.len()];
        for z in 2..7 {
            for y in 2..7 {
                for x in 1..12 {
                    bits[dims.index(x, y, z)] = 1;
                }
            }
        }
        bits[dims.index(17, 4, 4)] = 1;
        bits[dims.index(18, 4, 4)] = 1;
        let v = Volume::from_u8(dims, [1.0; 3], bits.clone()).unwrap();
        let r = decompose_main_vs_branches(&v, 0.5).unwrap();
        assert_eq!(r.labels()[dims.index(17, 4, 4)], REGION_BRANCH);
        assert_eq!(r.labels()[dims.index(6, 4, 4)], REGION_MAIN);
        r.check_partitions(&v).unwrap();
    }
}
