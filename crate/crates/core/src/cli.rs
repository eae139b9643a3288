//! The `cinetrack` command line: phantom synthesis, tracking, evaluation and
//! a superpixel debug view.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage or validation error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::acdc::{
    cine_file_name, cine_slices, cine_volume, format_info, gt_file_name, label_slices,
    label_volume, load_acdc_patient, INFO_FILE,
};
use crate::dataio::export::{export_boundary_png, export_error_map_png, export_overlay_png};
use crate::dataio::nifti::{read_nifti, write_nifti};
use crate::dataio::report::write_metrics_csv;
use crate::filters::gaussian_smooth;
use crate::imgcore::LabelMask;
use crate::metrics::{
    error_map, summarize, volume_structure_dice, DiceReport, Group, StructureDice,
};
use crate::phantom::{
    beating_annulus, moving_circle, AnnulusParams, CircleParams, Phantom, PhantomSpec,
};
use crate::propagation::{
    CellTarget, PipelineConfig, SuperpixelParams, DEFAULT_GAUSSIAN_SIGMA, DEFAULT_MEDIAN_KERNEL,
};
use crate::superpixels::{
    slic_segment, DEFAULT_CELL_AREA, DEFAULT_COMPACTNESS, DEFAULT_CONVERGENCE_TOL,
    DEFAULT_MAX_ITERATIONS,
};
use crate::tracking::{track_slices, TrackResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Parser)]
#[command(
    name = "cinetrack",
    version,
    about = "Superpixel tracking of cardiac masks through cine MR sequences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom patient in the ACDC directory layout.
    Synth(SynthArgs),
    /// Track the ED masks of a patient directory to ES.
    Track(TrackArgs),
    /// Score predictions against ground truth and summarize.
    Eval(EvalArgs),
    /// Render the superpixel cells of one frame.
    Superpixels(SuperpixelArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Gaussian smoothing standard deviation.
    #[arg(long, default_value_t = DEFAULT_GAUSSIAN_SIGMA)]
    pub sigma: f64,
    /// Median filter window side (odd).
    #[arg(long, default_value_t = DEFAULT_MEDIAN_KERNEL)]
    pub kernel: usize,
    /// Mean superpixel area in pixels.
    #[arg(long, default_value_t = DEFAULT_CELL_AREA, conflicts_with = "cells")]
    pub cell_area: f64,
    /// Absolute superpixel count per frame.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Spatial-vs-intensity weight of the superpixel distance.
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    pub compactness: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
}

impl PipelineArgs {
    pub fn to_config(&self) -> PipelineConfig {
        PipelineConfig {
            gaussian_sigma: self.sigma,
            median_kernel: self.kernel,
            superpixel: SuperpixelParams {
                cells: match self.cells {
                    Some(k) => CellTarget::Absolute(k),
                    None => CellTarget::MeanArea(self.cell_area),
                },
                compactness: self.compactness,
                max_iterations: self.max_iterations,
                convergence_tol: DEFAULT_CONVERGENCE_TOL,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Circle,
    Annulus,
}

impl PhantomKind {
    fn as_str(self) -> &'static str {
        match self {
            PhantomKind::Circle => "circle",
            PhantomKind::Annulus => "annulus",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = PhantomKind::Circle)]
    pub kind: PhantomKind,
    /// Frame count; 10 for the circle, 20 for the annulus.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Canvas width; 64 for the circle, 96 for the annulus.
    #[arg(long)]
    pub width: Option<usize>,
    /// Canvas height; defaults to the width.
    #[arg(long)]
    pub height: Option<usize>,
    /// Disk radius (circle).
    #[arg(long, default_value_t = 20.0)]
    pub radius: f64,
    /// Per-frame horizontal shift (circle).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub shift_x: f64,
    /// Per-frame vertical shift (circle).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub shift_y: f64,
    /// Cavity radius at ED (annulus).
    #[arg(long, default_value_t = 16.0)]
    pub inner: f64,
    /// Outer wall radius at ED (annulus).
    #[arg(long, default_value_t = 28.0)]
    pub outer: f64,
    /// Fractional radius reduction at ES (annulus).
    #[arg(long, default_value_t = 0.3)]
    pub contraction: f64,
    /// Standard deviation of the additive intensity noise.
    #[arg(long, default_value_t = crate::phantom::DEFAULT_NOISE_SIGMA)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Patient id used in file names.
    #[arg(long, default_value = "phantom")]
    pub id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    /// Patient directory (ACDC layout, or the output of `synth`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the predicted mask volume at every frame of both paths.
    #[arg(long)]
    pub masks: bool,
    /// Write ES overlay PNGs per slice.
    #[arg(long)]
    pub overlays: bool,
    /// Write ES error-map PNGs per slice.
    #[arg(long)]
    pub error_maps: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Track output directories, or directories containing them.
    pub runs: Vec<PathBuf>,
    /// Predicted label volume, scored against `--truth`.
    #[arg(long, requires_all = ["truth", "group"], conflicts_with = "runs")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    /// Group tag for `--pred`.
    #[arg(long, requires = "pred")]
    pub group: Option<String>,
    /// Patient id for `--pred`; defaults to the prediction file stem.
    #[arg(long, requires = "pred")]
    pub id: Option<String>,
    #[arg(long, default_value = METRICS_FILE)]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SuperpixelArgs {
    /// Cine NIfTI file, or a patient directory holding one.
    #[arg(long)]
    pub input: PathBuf,
    /// Slice index, 0-based.
    #[arg(long, default_value_t = 0)]
    pub slice: usize,
    /// Frame index, 0-based.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// Failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime_at(path: &Path) -> impl Fn(crate::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Superpixels(a) => cmd_superpixels(a),
    }
}

fn build_phantom(a: &SynthArgs) -> crate::Result<Phantom> {
    let (frames, side) = match a.kind {
        PhantomKind::Circle => (10, 64),
        PhantomKind::Annulus => (20, 96),
    };
    let width = a.width.unwrap_or(side);
    let mut spec = PhantomSpec::new(width, a.height.unwrap_or(width), a.frames.unwrap_or(frames));
    spec.noise_sigma = a.noise;
    spec.seed = a.seed;
    if spec.width < 2 || spec.height < 2 {
        return Err(crate::Error::invalid(format!(
            "phantom canvas {}x{} is too small",
            spec.width, spec.height
        )));
    }
    match a.kind {
        PhantomKind::Circle => moving_circle(
            &spec,
            &CircleParams::centered(&spec, a.radius, (a.shift_x, a.shift_y)),
        ),
        PhantomKind::Annulus => {
            let params = AnnulusParams::centered(&spec, a.inner, a.outer, a.contraction);
            beating_annulus(&spec, &params)
        }
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.id.is_empty() || a.id.contains(['/', '\\']) {
        return Err(usage(format!("invalid patient id {:?}", a.id)));
    }
    let phantom = build_phantom(a).map_err(usage)?;
    let seq = &phantom.sequence;
    let t = seq.len();
    let (ed, es) = (seq.ed_index(), seq.es_index());

    fs::create_dir_all(a.out.join("preview"))?;
    let info = format_info(&[
        ("ED", (ed + 1).to_string()),
        ("ES", (es + 1).to_string()),
        ("Group", Group::Phantom.to_string()),
        ("NbFrame", t.to_string()),
        ("Kind", a.kind.as_str().to_string()),
        ("Seed", a.seed.to_string()),
        ("Noise", a.noise.to_string()),
    ]);
    fs::write(a.out.join(INFO_FILE), info)?;
    write_nifti(
        &cine_volume(&[seq.frames().to_vec()])?,
        a.out.join(cine_file_name(&a.id)),
    )?;
    for idx in [ed, es] {
        let gt = label_volume(std::slice::from_ref(&phantom.truth[idx]))?;
        write_nifti(&gt, a.out.join(gt_file_name(&a.id, idx + 1)))?;
    }
    // full truth as (x, y, 1, t)
    let all = label_volume(&phantom.truth)?;
    let mut all4 = all.clone();
    all4.dims = vec![all.dims[0], all.dims[1], 1, t];
    write_nifti(&all4, a.out.join(format!("{}_4d_gt.nii.gz", a.id)))?;
    for (i, (frame, mask)) in seq.frames().iter().zip(&phantom.truth).enumerate() {
        export_overlay_png(
            frame,
            mask,
            a.out.join("preview").join(format!("frame{:02}.png", i + 1)),
        )?;
    }
    println!(
        "wrote {} phantom with {t} frames to {}",
        a.kind.as_str(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a `track` invocation and locate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub patient_id: String,
    pub group: Group,
    /// 1-based, as in the metadata.
    pub ed_frame: usize,
    pub es_frame: usize,
    pub frame_count: usize,
    pub slice_count: usize,
    /// Phantom noise seed, when the input records one.
    pub seed: Option<u64>,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    /// Fused ES prediction, relative to the run directory.
    pub prediction: PathBuf,
    /// ES ground truth the prediction is scored against.
    pub truth: PathBuf,
    pub dice: StructureDice,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub fn cmd_track(a: &TrackArgs) -> Result<(), CliError> {
    let config = a.pipeline.to_config();
    config.validate().map_err(usage)?;

    let patient = load_acdc_patient(&a.input).map_err(runtime_at(&a.input))?;
    let seqs = patient.sequences()?;
    let results = track_slices(&seqs, &config)?;

    fs::create_dir_all(&a.out)?;
    let fused: Vec<LabelMask> = results.iter().map(|r| r.fused_es.clone()).collect();
    let prediction = PathBuf::from(format!(
        "{}_frame{:02}_pred.nii.gz",
        patient.id, patient.es_frame
    ));
    let volume = label_volume(&fused)?.with_geometry_of(&patient.gt_es);
    write_nifti(&volume, a.out.join(&prediction))?;

    let truth_slices = patient.es_masks()?;
    let dice = volume_structure_dice(&fused, &truth_slices)?;

    if a.masks {
        write_path_masks(&a.out.join("masks"), &results, &patient.gt_es)?;
    }
    if a.overlays || a.error_maps {
        for (z, (seq, r)) in seqs.iter().zip(&results).enumerate() {
            let frame = &seq.frames()[seq.es_index()];
            if a.overlays {
                let dir = a.out.join("overlays");
                fs::create_dir_all(&dir)?;
                for (tag, mask) in [
                    ("fused", &r.fused_es),
                    ("forward", r.forward_es()),
                    ("backward", r.backward_es()),
                ] {
                    export_overlay_png(frame, mask, dir.join(format!("slice{z:02}_{tag}.png")))?;
                }
                export_overlay_png(
                    frame,
                    &truth_slices[z],
                    dir.join(format!("slice{z:02}_truth.png")),
                )?;
            }
            if a.error_maps {
                let dir = a.out.join("error_maps");
                fs::create_dir_all(&dir)?;
                export_error_map_png(
                    &error_map(&r.fused_es, &truth_slices[z])?,
                    dir.join(format!("slice{z:02}_fused.png")),
                )?;
            }
        }
    }

    let mut inputs = Vec::new();
    for p in [
        &patient.cine_path,
        &patient.gt_ed_path,
        &patient.gt_es_path,
        &a.input.join(INFO_FILE),
    ] {
        inputs.push(InputDigest {
            path: absolute(p),
            sha256: sha256_file(p)?,
        });
    }
    let seed = match patient.info.get("Seed") {
        Some(s) => Some(
            s.parse::<u64>()
                .map_err(|_| CliError::Runtime(format!("invalid Seed {s:?} in {INFO_FILE}")))?,
        ),
        None => None,
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: "track".into(),
        patient_id: patient.id.clone(),
        group: patient.group,
        ed_frame: patient.ed_frame,
        es_frame: patient.es_frame,
        frame_count: patient.frame_count(),
        slice_count: patient.slice_count(),
        seed,
        config,
        inputs,
        prediction,
        truth: absolute(&patient.gt_es_path),
        dice,
    };
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(a.out.join(MANIFEST_FILE), json + "\n")?;
    write_metrics_csv(
        &[DiceReport::new(patient.id.clone(), patient.group, dice)],
        a.out.join(METRICS_FILE),
    )?;

    println!(
        "{}: {} slices, ES Dice rv {:.4} myo {:.4} lv {:.4}",
        patient.id,
        results.len(),
        dice.rv,
        dice.myo,
        dice.lv
    );
    Ok(())
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// One label volume per visited frame and direction.
fn write_path_masks(
    dir: &Path,
    results: &[TrackResult],
    geometry: &crate::dataio::NiftiVolume,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let first = &results[0];
    for (tag, path, pick) in [
        (
            "forward",
            &first.forward_path,
            (|r: &TrackResult, k: usize| r.forward_masks[k].clone())
                as fn(&TrackResult, usize) -> LabelMask,
        ),
        (
            "backward",
            &first.backward_path,
            |r: &TrackResult, k: usize| r.backward_masks[k].clone(),
        ),
    ] {
        for (k, &frame) in path.iter().enumerate() {
            let slices: Vec<LabelMask> = results.iter().map(|r| pick(r, k)).collect();
            let vol = label_volume(&slices)?.with_geometry_of(geometry);
            write_nifti(
                &vol,
                dir.join(format!("{tag}_step{k:02}_frame{:02}.nii.gz", frame + 1)),
            )?;
        }
    }
    Ok(())
}

/// Run directories under `root`: itself if it holds a manifest, else its
/// immediate children that do, sorted by path.
fn discover_runs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    if !root.is_dir() {
        return Err(CliError::Runtime(format!(
            "{} is not a run directory",
            root.display()
        )));
    }
    let mut runs = Vec::new();
    for entry in fs::read_dir(root)? {
        let p = entry?.path();
        if p.join(MANIFEST_FILE).is_file() {
            runs.push(p);
        }
    }
    runs.sort();
    Ok(runs)
}

fn score_volumes(pred: &Path, truth: &Path) -> Result<StructureDice, CliError> {
    let p = label_slices(&read_nifti(pred).map_err(runtime_at(pred))?).map_err(runtime_at(pred))?;
    let t =
        label_slices(&read_nifti(truth).map_err(runtime_at(truth))?).map_err(runtime_at(truth))?;
    volume_structure_dice(&p, &t)
        .map_err(|e| CliError::Runtime(format!("{} vs {}: {e}", pred.display(), truth.display())))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    if let Some(pred) = &a.pred {
        let truth = a
            .truth
            .as_ref()
            .ok_or_else(|| usage("--pred needs --truth"))?;
        let group: Group = a
            .group
            .as_deref()
            .unwrap_or_default()
            .parse()
            .map_err(usage)?;
        let id = match &a.id {
            Some(id) => id.clone(),
            None => stem_of(pred),
        };
        reports.push(DiceReport::new(id, group, score_volumes(pred, truth)?));
    } else {
        if a.runs.is_empty() {
            return Err(usage("give run directories or --pred/--truth"));
        }
        for root in &a.runs {
            for run in discover_runs(root)? {
                let path = run.join(MANIFEST_FILE);
                let text = fs::read_to_string(&path)?;
                let m: RunManifest = serde_json::from_str(&text)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                let dice = score_volumes(&run.join(&m.prediction), &run.join(&m.truth))?;
                reports.push(DiceReport::new(m.patient_id, m.group, dice));
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::Runtime("no runs found to evaluate".into()));
    }
    write_metrics_csv(&reports, &a.csv)?;
    let summary = summarize(&reports)?;
    println!("{} patients", reports.len());
    print!("{summary}");
    Ok(())
}

/// File name without its `.nii[.gz]` suffix.
fn stem_of(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in [".nii.gz", ".nii"] {
        if let Some(s) = name.strip_suffix(suffix) {
            return s.to_string();
        }
    }
    name
}

fn find_cine(input: &Path) -> Result<PathBuf, CliError> {
    if !input.is_dir() {
        return Ok(input.to_path_buf());
    }
    let mut found: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let n = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            n.ends_with("_4d.nii.gz") || n.ends_with("_4d.nii")
        })
        .collect();
    found.sort();
    found.into_iter().next().ok_or_else(|| {
        CliError::Runtime(format!(
            "no *_4d.nii[.gz] cine volume in {}",
            input.display()
        ))
    })
}

pub fn cmd_superpixels(a: &SuperpixelArgs) -> Result<(), CliError> {
    let config = a.pipeline.to_config();
    config.validate().map_err(usage)?;
    let path = find_cine(&a.input)?;
    let slices = cine_slices(&read_nifti(&path).map_err(runtime_at(&path))?)?;
    let frame = slices
        .get(a.slice)
        .and_then(|s| s.get(a.frame))
        .ok_or_else(|| {
            usage(format!(
                "slice {} frame {} out of range ({} slices, {} frames)",
                a.slice,
                a.frame,
                slices.len(),
                slices.first().map_or(0, Vec::len)
            ))
        })?;
    let smoothed = gaussian_smooth(frame, config.gaussian_sigma)?;
    let sp = config.superpixel.for_dims(frame.width(), frame.height());
    sp.validate(frame.width(), frame.height()).map_err(usage)?;
    let cells = slic_segment(&smoothed, &sp)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    export_boundary_png(frame, &cells, &a.out)?;
    println!(
        "{} cells for a {}x{} frame",
        cells.cell_count(),
        frame.width(),
        frame.height()
    );
    Ok(())
}
