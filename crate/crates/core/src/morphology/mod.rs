//! Binary-mask morphology: connected components, Euclidean distance and
//! feature transforms, topology-preserving thinning, centerline graphs and
//! the main-trunk / branch split used by the multi-level metric.

mod cca;
mod decompose;
mod edt;
mod graph;
mod skeleton;

pub use cca::{connected_components, connected_components_bits, largest_component, LabelMap};
pub use decompose::{decompose_main_vs_branches, decompose_with, DecomposeOptions, RegionLabelMap, REGION_BACKGROUND, REGION_BRANCH, REGION_MAIN};
pub use edt::{distance_transform, distance_transform_bits, nearest_site_transform, FeatureTransform};
pub use graph::{build_centerline_graph, CenterlineGraph, Edge, Node, NodeKind};
pub use skeleton::{is_simple_point, skeletonize, skeletonize_bits};

use crate::error::{Error, Result};
use crate::volume::Dims;

/// Voxel adjacency used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face and edge neighbours.
    Eighteen,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidConnectivity(other)),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Whether a unit offset (each component in -1..=1, not all zero) is
    /// an adjacency under this connectivity.
    pub fn admits(self, d: [i64; 3]) -> bool {
        let l1 = d[0].abs() + d[1].abs() + d[2].abs();
        match self {
            Connectivity::Six => l1 == 1,
            Connectivity::Eighteen => (1..=2).contains(&l1),
            Connectivity::TwentySix => l1 >= 1,
        }
    }

    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let d = [dx, dy, dz];
                    if self.admits(d) {
                        out.push(d);
                    }
                }
            }
        }
        out
    }
}

/// Linear indices of in-bounds neighbours of `i` under `offsets`.
#[inline]
pub(crate) fn neighbours(dims: Dims, i: usize, offsets: &[[i64; 3]], out: &mut Vec<usize>) {
    out.clear();
    let c = dims.coords(i);
    for d in offsets {
        let p = [c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]];
        if dims.contains(p) {
            out.push(dims.index(p[0] as usize, p[1] as usize, p[2] as usize));
        }
    }
}
