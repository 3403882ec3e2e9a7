//! Brute-force reference implementations shared by the integration tests.
//! They favour obviousness over speed and share no code with the library.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear index with x fastest.
pub fn lin(shape: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + shape[0] * (y + shape[1] * z)
}

pub fn coords(shape: [usize; 3], i: usize) -> [usize; 3] {
    [i % shape[0], (i / shape[0]) % shape[1], i / (shape[0] * shape[1])]
}

/// Neighbour offsets for 6/18/26-connectivity by counting non-zero steps.
pub fn offsets(connectivity: u32) -> Vec<[i64; 3]> {
    let max_nonzero = match connectivity {
        6 => 1,
        18 => 2,
        26 => 3,
        _ => panic!("connectivity {connectivity}"),
    };
    let mut out = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nz = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                if nz >= 1 && nz <= max_nonzero {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Flood-fill labelling. Components are numbered by size (largest first),
/// ties broken by the smallest linear index in the component.
pub fn flood_fill_labels(bits: &[u8], shape: [usize; 3], connectivity: u32) -> Vec<u32> {
    let offs = offsets(connectivity);
    let mut comp = vec![usize::MAX; bits.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for seed in 0..bits.len() {
        if bits[seed] == 0 || comp[seed] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut list = vec![seed];
        comp[seed] = id;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            let c = coords(shape, i);
            for o in &offs {
                let p = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
                if (0..3).any(|k| p[k] < 0 || p[k] >= shape[k] as i64) {
                    continue;
                }
                let j = lin(shape, p[0] as usize, p[1] as usize, p[2] as usize);
                if bits[j] != 0 && comp[j] == usize::MAX {
                    comp[j] = id;
                    list.push(j);
                    queue.push_back(j);
                }
            }
        }
        members.push(list);
    }
    // seeds are visited in raster order, so `id` order already breaks ties
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()).then(a.cmp(&b)));
    let mut labels = vec![0u32; bits.len()];
    for (rank, &id) in order.iter().enumerate() {
        for &i in &members[id] {
            labels[i] = rank as u32 + 1;
        }
    }
    labels
}

/// Distance from every foreground voxel to the nearest background voxel,
/// by scanning all background voxels. Squared terms are summed x, y, z.
pub fn brute_edt(bits: &[u8], shape: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let background: Vec<[usize; 3]> = (0..bits.len())
        .filter(|&i| bits[i] == 0)
        .map(|i| coords(shape, i))
        .collect();
    (0..bits.len())
        .map(|i| {
            if bits[i] == 0 {
                return 0.0;
            }
            let c = coords(shape, i);
            let mut best = f64::INFINITY;
            for b in &background {
                let dx = (c[0] as f64 - b[0] as f64) * spacing[0];
                let dy = (c[1] as f64 - b[1] as f64) * spacing[1];
                let dz = (c[2] as f64 - b[2] as f64) * spacing[2];
                let d2 = (dx * dx + dy * dy) + dz * dz;
                if d2 < best {
                    best = d2;
                }
            }
            best.sqrt()
        })
        .collect()
}

/// Seeded random binary mask with the given foreground probability.
pub fn random_mask(shape: [usize; 3], density: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shape.iter().product::<usize>())
        .map(|_| (rng.gen::<f64>() < density) as u8)
        .collect()
}

/// Dice of two indicator vectors; 1 when both are empty.
pub fn dice_bits(a: &[u8], b: &[u8]) -> f64 {
    let inter = a.iter().zip(b).filter(|(&x, &y)| x != 0 && y != 0).count();
    let na = a.iter().filter(|&&x| x != 0).count();
    let nb = b.iter().filter(|&&x| x != 0).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// The six local-validation dice scores (percent) of the ensemble members.
pub const MEMBER_SCORES: [f64; 6] = [84.30, 85.50, 85.52, 86.55, 86.75, 86.87];

/// Same scores in hundredths of a percent, for exact integer arithmetic.
pub const MEMBER_HUNDREDTHS: [u64; 6] = [8430, 8550, 8552, 8655, 8675, 8687];

pub fn member_scores_csv() -> String {
    let names = ["Unet_1", "Unet_2", "Unet_3", "Swin_UnetTr_1", "Swin_UnetTr_2", "Swin_UnetTr_3"];
    let mut s = String::from("model_id,dice\n");
    for (n, d) in names.iter().zip(MEMBER_SCORES) {
        s.push_str(&format!("{n},{d:.2}\n"));
    }
    s
}
