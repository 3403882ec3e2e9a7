//! Topology-preserving 3D thinning.
//!
//! Foreground uses 26-adjacency and background 6-adjacency. A voxel is
//! *simple* when its 3x3x3 neighbourhood (centre excluded) has exactly one
//! 26-connected foreground component and exactly one 6-connected background
//! component inside the 18-neighbourhood touching a face neighbour. Each
//! pass sweeps six sub-iterations, one per face direction, deleting simple
//! border voxels that are not curve endpoints. Candidates of a sub-iteration
//! are re-checked one at a time before removal.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume, VoxelData};

use super::{connected_components_bits, Connectivity};

const CENTRE: usize = 13;

#[inline]
fn cell(dx: i64, dy: i64, dz: i64) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

#[inline]
fn offset(c: usize) -> [i64; 3] {
    [(c % 3) as i64 - 1, ((c / 3) % 3) as i64 - 1, (c / 9) as i64 - 1]
}

struct Tables {
    /// 26-adjacent cells (centre excluded) as bitmasks.
    adj26: [u32; 27],
    /// 6-adjacent cells restricted to the 18-neighbourhood.
    adj6_in_n18: [u32; 27],
    n18: u32,
    faces: u32,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut adj26 = [0u32; 27];
        let mut adj6_in_n18 = [0u32; 27];
        let mut n18 = 0u32;
        let mut faces = 0u32;
        let l1 = |o: [i64; 3]| o[0].abs() + o[1].abs() + o[2].abs();
        for c in 0..27 {
            if c == CENTRE {
                continue;
            }
            let oc = offset(c);
            if l1(oc) <= 2 {
                n18 |= 1 << c;
            }
            if l1(oc) == 1 {
                faces |= 1 << c;
            }
        }
        for c in 0..27 {
            if c == CENTRE {
                continue;
            }
            let oc = offset(c);
            for d in 0..27 {
                if d == CENTRE || d == c {
                    continue;
                }
                let od = offset(d);
                let diff = [od[0] - oc[0], od[1] - oc[1], od[2] - oc[2]];
                let cheb = diff.iter().map(|x| x.abs()).max().unwrap();
                if cheb == 1 {
                    adj26[c] |= 1 << d;
                    if l1(diff) == 1 && (n18 >> c) & 1 == 1 && (n18 >> d) & 1 == 1 {
                        adj6_in_n18[c] |= 1 << d;
                    }
                }
            }
        }
        Tables {
            adj26,
            adj6_in_n18,
            n18,
            faces,
        }
    })
}

/// Flood the set `within` from `seed` using adjacency `adj`.
#[inline]
fn flood(seed: u32, within: u32, adj: &[u32; 27]) -> u32 {
    let mut reached = seed;
    let mut frontier = seed;
    while frontier != 0 {
        let c = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let next = adj[c] & within & !reached;
        reached |= next;
        frontier |= next;
    }
    reached
}

/// Simple-point test on a 27-bit neighbourhood mask (bit 13 = centre).
pub fn is_simple_point(nbhd: u32) -> bool {
    let t = tables();
    let fg = nbhd & !(1 << CENTRE) & ((1 << 27) - 1);
    if fg == 0 {
        return false;
    }
    // exactly one 26-component of foreground
    let first = fg & fg.wrapping_neg();
    if flood(first, fg, &t.adj26) != fg {
        return false;
    }
    // exactly one 6-component of background in N18 touching a face
    let bg = !nbhd & t.n18;
    let mut face_bg = bg & t.faces;
    if face_bg == 0 {
        return false;
    }
    let seed = face_bg & face_bg.wrapping_neg();
    let comp = flood(seed, bg, &t.adj6_in_n18);
    face_bg &= !comp;
    face_bg == 0
}

fn neighbourhood(img: &[u8], dims: Dims, i: usize) -> u32 {
    let c = dims.coords(i);
    let [nx, ny, nz] = dims.0;
    let interior = c[0] > 0 && c[0] + 1 < nx && c[1] > 0 && c[1] + 1 < ny && c[2] > 0 && c[2] + 1 < nz;
    let mut m = 0u32;
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let p = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                if !interior && !dims.contains(p) {
                    continue;
                }
                if img[dims.index(p[0] as usize, p[1] as usize, p[2] as usize)] != 0 {
                    m |= 1 << cell(dx, dy, dz);
                }
            }
        }
    }
    m
}

const DIRECTIONS: [[i64; 3]; 6] = [
    [0, -1, 0],
    [0, 1, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Thin a binary indicator to a one-voxel-wide skeleton.
pub fn skeletonize_bits(bits: &[u8], dims: Dims) -> Vec<u8> {
    let mut img: Vec<u8> = bits.iter().map(|&b| (b != 0) as u8).collect();
    let mut active: Vec<usize> = (0..img.len()).filter(|&i| img[i] != 0).collect();
    let mut candidates = Vec::new();
    loop {
        let mut removed = 0usize;
        for dir in DIRECTIONS {
            let dir_cell = 1u32 << cell(dir[0], dir[1], dir[2]);
            candidates.clear();
            for &i in &active {
                if img[i] == 0 {
                    continue;
                }
                let nb = neighbourhood(&img, dims, i);
                if nb & dir_cell != 0 {
                    continue; // not a border voxel in this direction
                }
                if is_endpoint(nb) || !is_simple_point(nb) {
                    continue;
                }
                candidates.push(i);
            }
            for &i in &candidates {
                let nb = neighbourhood(&img, dims, i);
                if !is_endpoint(nb) && is_simple_point(nb) {
                    img[i] = 0;
                    removed += 1;
                }
            }
        }
        active.retain(|&i| img[i] != 0);
        if removed == 0 {
            break;
        }
    }
    img
}

#[inline]
fn is_endpoint(nbhd: u32) -> bool {
    (nbhd & !(1 << CENTRE)).count_ones() == 1
}

/// Skeleton of a single 26-connected component, as a u8 0/1 volume.
pub fn skeletonize(mask: &Volume) -> Result<Volume> {
    let bits = mask.to_binary();
    let k = connected_components_bits(&bits, mask.dims(), Connectivity::TwentySix).num_components();
    if k != 1 {
        return Err(Error::NotSingleComponent(k));
    }
    mask.like(VoxelData::U8(skeletonize_bits(&bits, mask.dims())))
}
