//! The `pulmofuse` command line.
//!
//! Exit status: 0 on success, 1 for invalid arguments or inputs the caller
//! can fix, 2 for I/O and file-format errors. Diagnostics go to the error
//! stream; data goes to files or the output stream.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ensemble::{self, compute_weights, fuse_both, fuse_streaming, EnsembleWeights, ModelScores};
use crate::error::{Error, Result};
use crate::metrics::{self, cca_tradeoff_report, multi_level_dice, DiceReport, DEFAULT_W_BRANCH};
use crate::morphology::{
    connected_components, decompose_with, largest_component, Connectivity, DecomposeOptions, NodeKind,
    RegionLabelMap,
};
use crate::nifti::{
    check_binary_labels, is_gz_path, normalize_labels, read_nifti_file, write_atomic, write_nifti_file, NiftiHeader,
    SlabReader,
};
use crate::patching::plan_patches;
use crate::synth::{self, Corruption};
use crate::volume::{Volume, VoxelData};
use crate::volume_ops::{
    apply_augmentation, clip_scale_hu, crop_uninformative_slices, project_sum, AugmentationSpec, Axis, Plane,
    DEFAULT_HU_RANGE,
};

/// Predictions with more z-slices than this are fused slab by slab.
pub const STREAMING_SLICE_THRESHOLD: usize = 256;
pub const DEFAULT_SLAB_DEPTH: usize = 32;

#[derive(Debug, Parser)]
#[command(
    name = "pulmofuse",
    version,
    about = "Pulmonary artery CT pipeline: preprocessing, patching, ensemble fusion, post-processing and evaluation",
    after_help = "Model inference is external: run the networks on the preprocessed volumes \
                  (or their patches) and pass the resulting probability maps to `fuse`."
)]
pub struct Cli {
    /// Plain `key = value` file with defaults; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print NIfTI header fields as key=value lines.
    Info(InfoArgs),
    /// Clip and scale HU values to [0, 1], optionally crop empty slices and augment.
    Preprocess(PreprocessArgs),
    /// Print the patch origins covering a volume as CSV.
    PlanPatches(PlanPatchesArgs),
    /// Dice-weighted fusion of model probability maps.
    Fuse(FuseArgs),
    /// Connected components; optionally keep only the largest one.
    Cca(CcaArgs),
    /// Split a vessel mask into main trunk (1) and branches (2).
    Decompose(DecomposeArgs),
    /// Overall, main, branch and multi-level dice as CSV.
    Evaluate(EvaluateArgs),
    /// Sum-projection of a volume to a PGM image.
    Project(ProjectArgs),
    /// Write a synthetic vessel phantom and optional mock predictions.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub file: PathBuf,
    /// Also verify that the volume only holds labels 0 and 1 (exit 1 if not).
    #[arg(long)]
    pub check_labels: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// HU window `lo:hi` (default -1000:1000).
    #[arg(long, allow_hyphen_values = true, value_name = "LO:HI")]
    pub clip: Option<String>,
    /// Remove leading/trailing z-slices that hold only the minimum value.
    #[arg(long)]
    pub crop: bool,
    /// Where to write the crop record (default: <output>.crop.txt when --crop).
    #[arg(long, value_name = "FILE")]
    pub crop_record: Option<PathBuf>,
    /// Apply a random augmentation drawn from this seed.
    #[arg(long, value_name = "SEED")]
    pub augment_seed: Option<u64>,
    /// Rotation axis for augmentation: x, y or z.
    #[arg(long, default_value = "z")]
    pub rotation_axis: String,
}

#[derive(Debug, Args)]
pub struct PlanPatchesArgs {
    /// Volume shape `nx,ny,nz`.
    #[arg(long)]
    pub shape: String,
    /// Patch edge `n` or `px,py,pz` (default 96).
    #[arg(long)]
    pub patch: Option<String>,
    /// Stride `n` or `sx,sy,sz` (default: the patch shape).
    #[arg(long)]
    pub stride: Option<String>,
    /// Write the CSV here instead of the output stream.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// `model_id,dice` lines, one per prediction, in prediction order.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Binary fused mask.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the weighted probability map.
    #[arg(long)]
    pub soft_out: Option<PathBuf>,
    /// Keep only the largest connected component of the fused mask.
    #[arg(long)]
    pub cca: bool,
    #[arg(long)]
    pub connectivity: Option<u32>,
    /// Force slab streaming with this many slices per slab.
    #[arg(long)]
    pub slab_depth: Option<usize>,
    #[arg(required = true)]
    pub predictions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CcaArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Write only the largest component as a 0/1 mask instead of a label map.
    #[arg(long)]
    pub keep_largest: bool,
    /// 6, 18 or 26 (default 26).
    #[arg(long)]
    pub connectivity: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Main-trunk radius fraction (default 0.5).
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth mask; repeat together with --pred for several cases.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth region maps (0/1/2). Derived from the ground truth by
    /// decomposition when omitted.
    #[arg(long)]
    pub regions: Vec<PathBuf>,
    /// Weight of the branch term, in (0.5, 1) (default 0.6).
    #[arg(long)]
    pub w_branch: Option<f64>,
    /// Alpha used when regions are derived.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also report scores after largest-component filtering (rows suffixed `+cca`).
    #[arg(long)]
    pub cca_report: bool,
    /// Write the CSV here instead of the output stream.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// axial, coronal or sagittal.
    #[arg(long, default_value = "axial")]
    pub plane: String,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// cylinder or y-bifurcation.
    #[arg(long, default_value = "y-bifurcation")]
    pub preset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Number of mock predictions (pred_1.nii.gz, ...); mock i uses seed
    /// `seed * 1000 + i`.
    #[arg(long, default_value_t = 0)]
    pub mocks: usize,
    /// Boundary flip probability of the mocks.
    #[arg(long, default_value_t = 0.2)]
    pub flip_prob: f64,
    /// Detached false-positive blobs per mock.
    #[arg(long, default_value_t = 1)]
    pub blobs: usize,
}

/// Settings shared by several subcommands. Every field is checked before a
/// subcommand touches any file.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub clip: (f64, f64),
    pub patch: [usize; 3],
    pub stride: Option<[usize; 3]>,
    pub scores: Option<PathBuf>,
    pub w_branch: f64,
    pub cca: bool,
    pub connectivity: u32,
    pub alpha: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            clip: DEFAULT_HU_RANGE,
            patch: [96; 3],
            stride: None,
            scores: None,
            w_branch: DEFAULT_W_BRANCH,
            cca: false,
            connectivity: 26,
            alpha: DecomposeOptions::default().alpha,
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), n + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            let bad = |what: &str| Error::Config(format!("line {}: {key}: {what}", n + 1));
            match key {
                "clip" => cfg.clip = parse_clip(value).map_err(|_| bad("expected lo:hi"))?,
                "patch" => cfg.patch = parse_triple(value).map_err(|_| bad("expected n or a,b,c"))?,
                "stride" => cfg.stride = Some(parse_triple(value).map_err(|_| bad("expected n or a,b,c"))?),
                "scores" => cfg.scores = Some(PathBuf::from(value)),
                "w_branch" => cfg.w_branch = value.parse().map_err(|_| bad("expected a number"))?,
                "cca" => cfg.cca = value.parse().map_err(|_| bad("expected true or false"))?,
                "connectivity" => cfg.connectivity = value.parse().map_err(|_| bad("expected 6, 18 or 26"))?,
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("expected a number"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::DegenerateRange { lo, hi });
        }
        if self.patch.contains(&0) {
            return Err(Error::InvalidParameter(format!("patch {:?} has a zero edge", self.patch)));
        }
        if let Some(s) = self.stride {
            if (0..3).any(|k| s[k] == 0 || s[k] > self.patch[k]) {
                return Err(Error::InvalidStride(s));
            }
        }
        metrics::check_w_branch(self.w_branch)?;
        Connectivity::from_count(self.connectivity)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }

    pub fn connectivity(&self) -> Connectivity {
        Connectivity::from_count(self.connectivity).unwrap_or_default()
    }
}

fn parse_clip(s: &str) -> Result<(f64, f64)> {
    let err = || Error::Usage(format!("clip range {s:?}: expected lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(err)?;
    Ok((lo.trim().parse().map_err(|_| err())?, hi.trim().parse().map_err(|_| err())?))
}

/// `n` or `a,b,c`.
fn parse_triple(s: &str) -> Result<[usize; 3]> {
    let err = || Error::Usage(format!("{s:?}: expected n or a,b,c"));
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| err()))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [n] => Ok([*n; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(err()),
    }
}

/// Fold the subcommand's flags over the config-file values.
fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Preprocess(a) => {
            if let Some(c) = &a.clip {
                cfg.clip = parse_clip(c)?;
            }
            if let Some(s) = a.augment_seed {
                cfg.seed = s;
            }
        }
        Command::PlanPatches(a) => {
            if let Some(p) = &a.patch {
                cfg.patch = parse_triple(p)?;
            }
            if let Some(s) = &a.stride {
                cfg.stride = Some(parse_triple(s)?);
            }
        }
        Command::Fuse(a) => {
            if a.scores.is_some() {
                cfg.scores = a.scores.clone();
            }
            cfg.cca |= a.cca;
            if let Some(c) = a.connectivity {
                cfg.connectivity = c;
            }
        }
        Command::Cca(a) => {
            if let Some(c) = a.connectivity {
                cfg.connectivity = c;
            }
        }
        Command::Decompose(a) => {
            if let Some(al) = a.alpha {
                cfg.alpha = al;
            }
        }
        Command::Evaluate(a) => {
            if let Some(w) = a.w_branch {
                cfg.w_branch = w;
            }
            if let Some(al) = a.alpha {
                cfg.alpha = al;
            }
        }
        Command::Phantom(a) => {
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(d) = &a.out_dir {
                cfg.out_dir = d.clone();
            }
        }
        Command::Info(_) | Command::Project(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Info(a) => cmd_info(a, out),
        Command::Preprocess(a) => cmd_preprocess(a, &cfg, err),
        Command::PlanPatches(a) => cmd_plan_patches(a, &cfg, out),
        Command::Fuse(a) => cmd_fuse(a, &cfg, err),
        Command::Cca(a) => cmd_cca(a, &cfg, out),
        Command::Decompose(a) => cmd_decompose(a, &cfg, out),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg, out),
        Command::Project(a) => cmd_project(a),
        Command::Phantom(a) => cmd_phantom(a, &cfg, out),
    }
}

/// Write `volume` using `template` for the fields the volume does not define.
fn save(path: &Path, template: &NiftiHeader, volume: &Volume) -> Result<()> {
    write_nifti_file(path, &template.adapted_to(volume), volume)
}

fn cmd_info(a: &InfoArgs, out: &mut dyn Write) -> Result<()> {
    let (header, volume) = read_nifti_file(&a.file)?;
    for (k, v) in header.key_values() {
        writeln!(out, "{k}={v}")?;
    }
    if a.check_labels {
        let check = check_binary_labels(&volume);
        writeln!(out, "labels_foreground={}", check.foreground)?;
        writeln!(out, "labels_background={}", check.background)?;
        if !check.is_binary() {
            return Err(Error::InvalidParameter(format!(
                "{} holds values other than 0/1: {:?}",
                a.file.display(),
                check.unexpected
            )));
        }
        writeln!(out, "labels_binary=true")?;
    }
    Ok(())
}

fn cmd_preprocess(a: &PreprocessArgs, cfg: &PipelineConfig, err: &mut dyn Write) -> Result<()> {
    let axis = Axis::parse(&a.rotation_axis)?;
    let (header, volume) = read_nifti_file(&a.input)?;
    let mut norm = clip_scale_hu(&volume, cfg.clip.0, cfg.clip.1)?;
    if a.augment_seed.is_some() {
        let spec = AugmentationSpec::sample(cfg.seed, axis);
        writeln!(err, "augmentation: {spec:?}")?;
        norm = apply_augmentation(&norm, &spec)?;
    }
    let mut result = norm.into_volume();
    if a.crop {
        let (cropped, record) = crop_uninformative_slices(&result)?;
        let record_path = a.crop_record.clone().unwrap_or_else(|| {
            let mut p = a.output.clone().into_os_string();
            p.push(".crop.txt");
            PathBuf::from(p)
        });
        write_atomic(&record_path, |w| {
            writeln!(w, "{}", record.to_line())?;
            Ok(())
        })?;
        result = cropped;
    }
    save(&a.output, &header, &result)
}

fn cmd_plan_patches(a: &PlanPatchesArgs, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let shape = parse_triple(&a.shape)?;
    let grid = plan_patches(shape, cfg.patch, cfg.stride.unwrap_or(cfg.patch))?;
    let mut text = String::from("x,y,z\n");
    for o in &grid.origins {
        text.push_str(&format!("{},{},{}\n", o[0], o[1], o[2]));
    }
    match &a.out {
        Some(p) => write_atomic(p, |w| {
            w.write_all(text.as_bytes())?;
            Ok(())
        }),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn load_weights(cfg: &PipelineConfig, n: usize) -> Result<EnsembleWeights> {
    let path = cfg
        .scores
        .as_ref()
        .ok_or_else(|| Error::Usage("fuse needs --scores (or `scores` in the config file)".into()))?;
    let (_, scores) = ModelScores::parse_csv(&fs::read_to_string(path)?)?;
    if scores.len() != n {
        return Err(Error::CountMismatch {
            scores: scores.len(),
            predictions: n,
        });
    }
    compute_weights(&scores)
}

fn cmd_fuse(a: &FuseArgs, cfg: &PipelineConfig, err: &mut dyn Write) -> Result<()> {
    let weights = load_weights(cfg, a.predictions.len())?;
    let first = SlabReader::open(&a.predictions[0])?;
    let nz = first.shape()[2];
    drop(first);
    let streaming = a.slab_depth.is_some() || nz > STREAMING_SLICE_THRESHOLD;
    if streaming {
        let depth = a.slab_depth.unwrap_or(DEFAULT_SLAB_DEPTH);
        let mut readers = a
            .predictions
            .iter()
            .map(SlabReader::open)
            .collect::<Result<Vec<_>>>()?;
        let gz = is_gz_path(&a.out);
        let stats = match &a.soft_out {
            Some(soft) => {
                let mut stats = None;
                write_atomic(&a.out, |w| {
                    write_atomic(soft, |s| {
                        let (st, _, _) =
                            fuse_streaming(&mut readers, &weights, depth, (&mut *w, gz), Some((s, is_gz_path(soft))))?;
                        stats = Some(st);
                        Ok(())
                    })
                })?;
                stats
            }
            None => {
                let mut stats = None;
                write_atomic(&a.out, |w| {
                    let (st, _, _) =
                        fuse_streaming::<_, Vec<u8>>(&mut readers, &weights, depth, (w, gz), None)?;
                    stats = Some(st);
                    Ok(())
                })?;
                stats
            }
        };
        if let Some(st) = stats {
            writeln!(err, "fused {} slabs, {} foreground voxels", st.slabs, st.foreground)?;
        }
        if cfg.cca {
            let (header, mask) = read_nifti_file(&a.out)?;
            save(&a.out, &header, &keep_largest_or_empty(&mask, cfg.connectivity())?)?;
        }
        return Ok(());
    }

    let mut header = None;
    let mut preds = Vec::with_capacity(a.predictions.len());
    for p in &a.predictions {
        let (h, v) = read_nifti_file(p)?;
        header.get_or_insert(h);
        preds.push(v);
    }
    let header = header.expect("at least one prediction");
    let refs: Vec<&Volume> = preds.iter().collect();
    let (mut mask, soft) = fuse_both(&refs, &weights)?;
    if cfg.cca {
        mask = keep_largest_or_empty(&mask, cfg.connectivity())?;
    }
    if let Some(soft_path) = &a.soft_out {
        save(soft_path, &ensemble::output_header(&header, &soft), &soft)?;
    }
    save(&a.out, &ensemble::output_header(&header, &mask), &mask)
}

/// Largest component, or the (empty) mask itself when there is nothing to keep.
fn keep_largest_or_empty(mask: &Volume, conn: Connectivity) -> Result<Volume> {
    match largest_component(mask, conn) {
        Err(Error::EmptyMask) => mask.like(VoxelData::U8(mask.to_binary())),
        other => other,
    }
}

fn cmd_cca(a: &CcaArgs, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let (header, volume) = read_nifti_file(&a.input)?;
    let conn = cfg.connectivity();
    let labels = connected_components(&volume, conn);
    writeln!(out, "components={}", labels.num_components())?;
    for (k, s) in labels.sizes.iter().enumerate() {
        writeln!(out, "component_{}={}", k + 1, s)?;
    }
    let result = if a.keep_largest {
        keep_largest_or_empty(&volume, conn)?
    } else {
        let data = labels.labels.iter().map(|&l| l as f32).collect();
        volume.like(VoxelData::F32(data))?
    };
    save(&a.output, &header, &result)
}

fn cmd_decompose(a: &DecomposeArgs, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let (header, volume) = read_nifti_file(&a.input)?;
    let mask = normalize_labels(&volume)?;
    let (regions, graph) = decompose_with(&mask, DecomposeOptions { alpha: cfg.alpha })?;
    writeln!(out, "nodes={}", graph.nodes.len())?;
    writeln!(out, "endpoints={}", graph.count(NodeKind::Endpoint))?;
    writeln!(out, "junctions={}", graph.count(NodeKind::Junction))?;
    writeln!(out, "edges={}", graph.edges.len())?;
    writeln!(out, "main_voxels={}", regions.count(crate::morphology::REGION_MAIN))?;
    writeln!(out, "branch_voxels={}", regions.count(crate::morphology::REGION_BRANCH))?;
    save(&a.output, &header, regions.volume())
}

fn case_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.trim_end_matches(".gz").trim_end_matches(".nii").to_string()
}

fn cmd_evaluate(a: &EvaluateArgs, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    if a.gt.len() != a.pred.len() {
        return Err(Error::Usage(format!(
            "{} --gt files but {} --pred files",
            a.gt.len(),
            a.pred.len()
        )));
    }
    if !a.regions.is_empty() && a.regions.len() != a.gt.len() {
        return Err(Error::Usage(format!(
            "{} --regions files for {} cases",
            a.regions.len(),
            a.gt.len()
        )));
    }
    let mut rows = Vec::new();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for (k, (gt_path, pred_path)) in a.gt.iter().zip(&a.pred).enumerate() {
        let gt = normalize_labels(&read_nifti_file(gt_path)?.1)?;
        let pred = read_nifti_file(pred_path)?.1;
        let pred = pred.like(VoxelData::U8(pred.to_binary()))?;
        let regions = match a.regions.get(k) {
            Some(p) => RegionLabelMap::new(read_nifti_file(p)?.1)?,
            None => decompose_with(&gt, DecomposeOptions { alpha: cfg.alpha })?.0,
        };
        let id = case_id(pred_path);
        if a.cca_report {
            let (b, af) = cca_tradeoff_report(&pred, &gt, &regions, cfg.w_branch)?;
            rows.push(b.csv_row(&id));
            rows.push(af.csv_row(&format!("{id}+cca")));
            before.push(b);
            after.push(af);
        } else {
            let r = multi_level_dice(&pred, &gt, &regions, cfg.w_branch)?;
            rows.push(r.csv_row(&id));
            before.push(r);
        }
    }
    let mut text = format!("{}\n", metrics::CSV_HEADER);
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    let mean: DiceReport = metrics::average_reports(&before)?;
    text.push_str(&mean.csv_row("mean"));
    text.push('\n');
    if a.cca_report {
        text.push_str(&metrics::average_reports(&after)?.csv_row("mean+cca"));
        text.push('\n');
    }
    match &a.out {
        Some(p) => write_atomic(p, |w| {
            w.write_all(text.as_bytes())?;
            Ok(())
        }),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let plane = Plane::parse(&a.plane)?;
    let (_, volume) = read_nifti_file(&a.input)?;
    let image = project_sum(&volume, plane)?;
    write_atomic(&a.output, |w| Ok(image.write_pgm(w)?))
}

fn cmd_phantom(a: &PhantomArgs, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<()> {
    let spec = synth::preset(&a.preset, cfg.seed)?;
    let corruption = Corruption {
        boundary_flip_prob: a.flip_prob,
        detach_blob_count: a.blobs,
    };
    if !(0.0..=1.0).contains(&a.flip_prob) {
        return Err(Error::InvalidParameter(format!("--flip-prob {} outside [0, 1]", a.flip_prob)));
    }
    let phantom = synth::rasterize_phantom(&spec)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let dir = &cfg.out_dir;
    let write = |name: &str, v: &Volume| -> Result<()> { save(&dir.join(name), &NiftiHeader::for_volume(v), v) };
    write("hu.nii.gz", &phantom.hu)?;
    write("gt.nii.gz", &phantom.mask)?;
    write("regions.nii.gz", phantom.regions.volume())?;
    for i in 0..a.mocks {
        let mock = synth::mock_predict(&phantom.mask, corruption, synth::mock_seed(cfg.seed, i))?;
        write(&format!("pred_{}.nii.gz", i + 1), &mock)?;
    }
    let [nx, ny, nz] = spec.dims.0;
    writeln!(out, "shape={nx},{ny},{nz}")?;
    writeln!(out, "vessel_voxels={}", phantom.mask.count_nonzero())?;
    writeln!(out, "mocks={}", a.mocks)?;
    Ok(())
}
