//! Dice overlap, the multi-level (main trunk / branch) dice score and the
//! before/after report for largest-component filtering.

use crate::error::{Error, Result};
use crate::morphology::{largest_component, nearest_site_transform, Connectivity, RegionLabelMap, REGION_BRANCH, REGION_MAIN};
use crate::volume::Volume;

/// Default branch weight. Only "branches weigh more than the main artery"
/// is fixed; the value itself is a configurable default.
pub const DEFAULT_W_BRANCH: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceReport {
    pub overall_dice: f64,
    pub main_dice: f64,
    pub branch_dice: f64,
    pub multi_level_dice: f64,
    pub w_branch: f64,
    pub w_main: f64,
}

impl DiceReport {
    /// `case_id,overall,main,branch,multilevel` with shortest round-trip
    /// float formatting, so parsing the row recovers the exact values.
    pub fn csv_row(&self, case_id: &str) -> String {
        format!(
            "{},{},{},{},{}",
            case_id, self.overall_dice, self.main_dice, self.branch_dice, self.multi_level_dice
        )
    }
}

pub const CSV_HEADER: &str = "case_id,overall,main,branch,multilevel";

fn dice_counts(inter: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (a + b) as f64
    }
}

/// `2|A ∩ B| / (|A| + |B|)` over non-zero voxels; 1.0 when both are empty.
pub fn dice(a: &Volume, b: &Volume) -> Result<f64> {
    a.check_same_shape(b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for i in 0..a.len() {
        let x = a.get_f64(i) != 0.0;
        let y = b.get_f64(i) != 0.0;
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    Ok(dice_counts(inter, na, nb))
}

pub fn check_w_branch(w_branch: f64) -> Result<()> {
    if w_branch > 0.5 && w_branch < 1.0 {
        Ok(())
    } else {
        Err(Error::WeightOutOfRange(w_branch))
    }
}

/// Region-wise dice. Predicted voxels inside the ground truth take that
/// voxel's region; those outside take the region of the nearest
/// ground-truth voxel (Euclidean, in mm). With an empty ground truth every
/// predicted voxel counts as main.
pub fn multi_level_dice(pred: &Volume, gt: &Volume, gt_regions: &RegionLabelMap, w_branch: f64) -> Result<DiceReport> {
    check_w_branch(w_branch)?;
    multi_level_dice_weighted(pred, gt, gt_regions, w_branch)
}

/// Same as [`multi_level_dice`] without the `w_branch > 0.5` check.
pub(crate) fn multi_level_dice_weighted(
    pred: &Volume,
    gt: &Volume,
    gt_regions: &RegionLabelMap,
    w_branch: f64,
) -> Result<DiceReport> {
    pred.check_same_shape(gt)?;
    gt_regions.check_partitions(gt)?;
    let p = pred.to_binary();
    let g = gt.to_binary();
    let regions = gt_regions.labels();

    let outside_gt = p.iter().zip(&g).any(|(&a, &b)| a != 0 && b == 0);
    let gt_any = g.iter().any(|&b| b != 0);
    let nearest = if outside_gt && gt_any {
        Some(nearest_site_transform(&g, gt.dims(), gt.spacing()).nearest)
    } else {
        None
    };

    // [main, branch] counts
    let mut inter = [0usize; 2];
    let mut np = [0usize; 2];
    let mut ng = [0usize; 2];
    let (mut all_inter, mut all_p, mut all_g) = (0usize, 0usize, 0usize);
    for i in 0..p.len() {
        if g[i] != 0 {
            let r = (regions[i] == REGION_BRANCH) as usize;
            ng[r] += 1;
            all_g += 1;
        }
        if p[i] != 0 {
            all_p += 1;
            let region = if g[i] != 0 {
                regions[i]
            } else {
                match &nearest {
                    Some(n) => regions[n[i]],
                    None => REGION_MAIN,
                }
            };
            let r = (region == REGION_BRANCH) as usize;
            np[r] += 1;
            if g[i] != 0 {
                inter[r] += 1;
                all_inter += 1;
            }
        }
    }
    let main_dice = dice_counts(inter[0], np[0], ng[0]);
    let branch_dice = dice_counts(inter[1], np[1], ng[1]);
    let w_main = 1.0 - w_branch;
    Ok(DiceReport {
        overall_dice: dice_counts(all_inter, all_p, all_g),
        main_dice,
        branch_dice,
        multi_level_dice: w_branch * branch_dice + w_main * main_dice,
        w_branch,
        w_main,
    })
}

/// Reports on `pred` and on its largest 26-connected component. An empty
/// prediction has nothing to filter and yields two identical reports.
pub fn cca_tradeoff_report(
    pred: &Volume,
    gt: &Volume,
    gt_regions: &RegionLabelMap,
    w_branch: f64,
) -> Result<(DiceReport, DiceReport)> {
    let before = multi_level_dice(pred, gt, gt_regions, w_branch)?;
    let after = match largest_component(pred, Connectivity::TwentySix) {
        Ok(kept) => multi_level_dice(&kept, gt, gt_regions, w_branch)?,
        Err(Error::EmptyMask) => before,
        Err(e) => return Err(e),
    };
    Ok((before, after))
}

/// Fieldwise mean of per-case reports, which must share their weights.
pub fn average_reports(reports: &[DiceReport]) -> Result<DiceReport> {
    let first = reports.first().ok_or(Error::EmptyList)?;
    if reports.iter().any(|r| r.w_branch != first.w_branch || r.w_main != first.w_main) {
        return Err(Error::InvalidParameter("reports use different region weights".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&DiceReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(DiceReport {
        overall_dice: mean(|r| r.overall_dice),
        main_dice: mean(|r| r.main_dice),
        branch_dice: mean(|r| r.branch_dice),
        multi_level_dice: mean(|r| r.multi_level_dice),
        w_branch: first.w_branch,
        w_main: first.w_main,
    })
}
