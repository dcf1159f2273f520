//! Batch pipeline: one worker per image, results merged in input order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use vessel_core::raster::pnm::{self, Pnm};
use vessel_core::raster::{self, BinaryImage, ColorImage, GrayImage};
use vessel_core::skeleton::{thin, SkeletonImage};
use vessel_core::vesselgraph::{
    build_graph, junction_branch_angles, metrics_csv, prune, track_vessels, vessel_metrics, vessel_profile,
    ExtendedVessel, SkeletonGraph, VesselMetrics,
};

use crate::config::{Format, PipelineConfig};
use crate::plots;

/// Which artifacts a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outputs {
    Preprocess,
    Skeleton,
    Graph,
    Analyze,
    Plot,
}

/// Width of one branch-angle histogram bin in degrees.
pub const ANGLE_BIN_DEGREES: usize = 10;
pub const ANGLE_BINS: usize = 180 / ANGLE_BIN_DEGREES;

/// Threshold used when a mask has a single grey level and Otsu is undefined.
pub const FLAT_MASK_THRESHOLD: f64 = 128.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub load: f64,
    pub binarize: f64,
    pub thin: f64,
    pub graph: f64,
    pub prune: f64,
    pub track: f64,
    pub measure: f64,
    pub write: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.load + self.binarize + self.thin + self.graph + self.prune + self.track + self.measure + self.write
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VesselRow {
    pub id: usize,
    pub tortuosity: f64,
    pub d_z: f64,
    pub arc_length: f64,
    pub mean_abs_curvature: f64,
    pub branch_angles: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub input: String,
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub width: usize,
    pub height: usize,
    pub vessel_count: usize,
    /// Tracked vessels without metrics: closed loops and vessels under four points.
    pub skipped_vessels: usize,
    pub mean_tortuosity: Option<f64>,
    pub mean_curvature: Option<f64>,
    /// Counts of per-vessel branch angles in bins of [`ANGLE_BIN_DEGREES`].
    pub branch_angle_histogram: Vec<usize>,
    #[serde(skip)]
    pub vessels: Vec<VesselRow>,
    #[serde(skip)]
    pub timings: StageTimings,
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl ImageReport {
    fn new(input: &Path, name: String) -> Self {
        Self {
            input: input.display().to_string(),
            name,
            status: Status::Ok,
            error: None,
            width: 0,
            height: 0,
            vessel_count: 0,
            skipped_vessels: 0,
            mean_tortuosity: None,
            mean_curvature: None,
            branch_angle_histogram: vec![0; ANGLE_BINS],
            vessels: Vec::new(),
            timings: StageTimings::default(),
            wall_seconds: 0.0,
            files: Vec::new(),
        }
    }

    fn failed(input: &Path, name: String, error: String) -> Self {
        Self { status: Status::Failed, error: Some(error), ..Self::new(input, name) }
    }
}

/// Result of a run. Timings are kept out of `report.json` so that the file
/// is byte-identical across runs; they go to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub images: Vec<ImageReport>,
    pub failed: usize,
    /// Emitted files, relative to the output directory.
    pub manifest: Vec<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("input,status,vessel_count,skipped_vessels,mean_tortuosity,mean_curvature\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for im in &self.images {
            let status = if im.status == Status::Ok { "ok" } else { "failed" };
            s += &format!(
                "{},{},{},{},{},{}\n",
                im.input,
                status,
                im.vessel_count,
                im.skipped_vessels,
                opt(im.mean_tortuosity),
                opt(im.mean_curvature)
            );
        }
        s
    }

    pub fn timings_json(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            name: &'a str,
            stages: &'a StageTimings,
            wall_seconds: f64,
        }
        #[derive(Serialize)]
        struct Timings<'a> {
            images: Vec<Entry<'a>>,
            wall_seconds: f64,
        }
        let t = Timings {
            images: self
                .images
                .iter()
                .map(|im| Entry { name: &im.name, stages: &im.timings, wall_seconds: im.wall_seconds })
                .collect(),
            wall_seconds: self.wall_seconds,
        };
        serde_json::to_string_pretty(&t).expect("timings serialize")
    }
}

/// Grey levels of a mask file; colour files are converted to luma.
pub fn load_gray(path: &Path) -> Result<GrayImage, pnm::PnmError> {
    Ok(match pnm::read(path)? {
        Pnm::Gray(g) => g,
        Pnm::Color(c) => raster::to_grayscale(&c),
    })
}

/// Otsu threshold, or a fixed mid-grey one when the image is flat.
pub fn binarize_mask(gray: &GrayImage) -> Result<BinaryImage, raster::RasterError> {
    let (lo, hi) = gray.range();
    if lo == hi {
        Ok(raster::threshold(gray, FLAT_MASK_THRESHOLD))
    } else {
        raster::binarize(gray)
    }
}

/// Everything derived from one mask.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub skeleton: SkeletonImage,
    pub graph: SkeletonGraph,
    /// Vessels with metrics, in tracking order; `rows[i]` belongs to `vessels[i]`.
    pub vessels: Vec<ExtendedVessel>,
    pub rows: Vec<VesselRow>,
    pub skipped: usize,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

/// Thin, build and prune the graph, track vessels and measure them.
pub fn analyze_mask(mask: &BinaryImage, cfg: &PipelineConfig, timings: &mut StageTimings) -> Analysis {
    let skeleton = timed(&mut timings.thin, || thin(mask));
    let raw = timed(&mut timings.graph, || build_graph(&skeleton));
    let graph = timed(&mut timings.prune, || prune(&raw, cfg.min_spur, cfg.min_component));
    let tracked = timed(&mut timings.track, || track_vessels(&graph));
    timed(&mut timings.measure, || {
        let angles = junction_branch_angles(&graph, &tracked);
        let mut vessels = Vec::new();
        let mut rows = Vec::new();
        let mut skipped = 0;
        for (v, branch_angles) in tracked.into_iter().zip(angles) {
            match vessel_metrics(&v, Some(cfg.harmonics)) {
                Ok(VesselMetrics { tortuosity, arc_length, mean_abs_curvature, .. }) => {
                    rows.push(VesselRow {
                        id: rows.len(),
                        tortuosity,
                        d_z: v.d_z,
                        arc_length,
                        mean_abs_curvature,
                        branch_angles,
                        points: v.points.clone(),
                    });
                    vessels.push(v);
                }
                Err(_) => skipped += 1,
            }
        }
        Analysis { skeleton, graph, vessels, rows, skipped }
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn angle_histogram(rows: &[VesselRow]) -> Vec<usize> {
    let mut h = vec![0; ANGLE_BINS];
    for a in rows.iter().flat_map(|r| &r.branch_angles) {
        let deg = a.to_degrees().clamp(0.0, 180.0);
        h[((deg / ANGLE_BIN_DEGREES as f64) as usize).min(ANGLE_BINS - 1)] += 1;
    }
    h
}

fn vessels_json(name: &str, rows: &[VesselRow]) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        image: &'a str,
        vessels: &'a [VesselRow],
    }
    serde_json::to_string_pretty(&Doc { image: name, vessels: rows }).expect("vessels serialize")
}

fn vessels_csv(rows: &[VesselRow]) -> String {
    let as_metrics: Vec<(usize, VesselMetrics)> = rows
        .iter()
        .map(|r| {
            (
                r.id,
                VesselMetrics {
                    tortuosity: r.tortuosity,
                    arc_length: r.arc_length,
                    mean_abs_curvature: r.mean_abs_curvature,
                    branch_angles: r.branch_angles.clone(),
                },
            )
        })
        .collect();
    metrics_csv(&as_metrics)
}

fn write(dir: &Path, file: String, bytes: &[u8], files: &mut Vec<PathBuf>) -> std::io::Result<()> {
    fs::write(dir.join(&file), bytes)?;
    files.push(PathBuf::from(file));
    Ok(())
}

fn gray_as_color(g: &GrayImage) -> ColorImage {
    let data = g.data().iter().flat_map(|&v| [v.round().clamp(0.0, 255.0) as u8; 3]).collect();
    ColorImage::new(g.width(), g.height(), data).expect("sizes match")
}

fn preprocess_one(path: &Path, name: &str, cfg: &PipelineConfig, report: &mut ImageReport) -> anyhow::Result<()> {
    let t = &mut report.timings;
    let img = timed(&mut t.load, || pnm::read(path))?;
    let color = match img {
        Pnm::Color(c) => c,
        Pnm::Gray(g) => gray_as_color(&g),
    };
    report.width = color.width();
    report.height = color.height();
    let enhanced = timed(&mut t.binarize, || raster::preprocess(&color, cfg.clahe(), cfg.gamma))?;
    let mask = timed(&mut t.binarize, || binarize_mask(&enhanced))?;
    let mut files = Vec::new();
    timed(&mut t.write, || -> std::io::Result<()> {
        write(&cfg.out, format!("{name}.pre.pgm"), &pnm::encode_gray(&enhanced), &mut files)?;
        write(&cfg.out, format!("{name}.mask.pgm"), &pnm::encode_binary(&mask), &mut files)
    })?;
    report.files = files;
    Ok(())
}

fn process_one(
    path: &Path,
    name: &str,
    cfg: &PipelineConfig,
    outputs: Outputs,
    report: &mut ImageReport,
) -> anyhow::Result<()> {
    if outputs == Outputs::Preprocess {
        return preprocess_one(path, name, cfg, report);
    }
    let mut t = StageTimings::default();
    let gray = timed(&mut t.load, || load_gray(path))?;
    report.width = gray.width();
    report.height = gray.height();
    let mask = timed(&mut t.binarize, || binarize_mask(&gray))?;
    let a = analyze_mask(&mask, cfg, &mut t);

    report.vessel_count = a.rows.len();
    report.skipped_vessels = a.skipped;
    report.mean_tortuosity = mean(a.rows.iter().map(|r| r.tortuosity));
    report.mean_curvature = mean(a.rows.iter().map(|r| r.mean_abs_curvature));
    report.branch_angle_histogram = angle_histogram(&a.rows);

    let mut files = Vec::new();
    let start = Instant::now();
    let dir = &cfg.out;
    if outputs != Outputs::Analyze && outputs != Outputs::Plot {
        write(dir, format!("{name}.skeleton.pgm"), &pnm::encode_binary(a.skeleton.as_mask()), &mut files)?;
    }
    if outputs != Outputs::Skeleton {
        write(dir, format!("{name}.graph.json"), a.graph.to_json().as_bytes(), &mut files)?;
    }
    if outputs == Outputs::Analyze || outputs == Outputs::Plot {
        match cfg.format {
            Format::Json => {
                write(dir, format!("{name}.vessels.json"), vessels_json(name, &a.rows).as_bytes(), &mut files)?
            }
            Format::Csv => write(dir, format!("{name}.vessels.csv"), vessels_csv(&a.rows).as_bytes(), &mut files)?,
        }
    }
    if outputs == Outputs::Plot {
        for (row, v) in a.rows.iter().zip(&a.vessels) {
            let profile = vessel_profile(v, Some(cfg.harmonics))?;
            let svg = plots::vessel_svg(&format!("{name} vessel {}", row.id), &profile, row.tortuosity);
            write(dir, format!("{name}.vessel{:03}.svg", row.id), svg.as_bytes(), &mut files)?;
        }
        let ppm = plots::descriptor_image(report.width, report.height, &a.vessels)?;
        write(dir, format!("{name}.descriptors.ppm"), &pnm::encode_color(&ppm), &mut files)?;
    }
    t.write += start.elapsed().as_secs_f64();
    report.timings = t;
    report.vessels = a.rows;
    report.files = files;
    Ok(())
}

/// Output names: file stems, made unique with the input position when two
/// inputs share a stem.
fn unique_names(inputs: &[PathBuf]) -> Vec<String> {
    let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in inputs {
        *counts.entry(stem(p)).or_default() += 1;
    }
    inputs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = stem(p);
            if counts[&s] > 1 {
                format!("{s}-{i}")
            } else {
                s
            }
        })
        .collect()
}

/// Run the pipeline over `cfg.inputs` and write the report files.
///
/// Per-file failures are recorded in the report and do not stop the run.
/// The error case covers the output directory and run-level files only.
pub fn run_pipeline(cfg: &PipelineConfig, outputs: Outputs) -> anyhow::Result<RunReport> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out)?;
    let mut inputs = cfg.inputs.clone();
    inputs.sort();
    let names = unique_names(&inputs);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let images: Vec<ImageReport> = pool.install(|| {
        inputs
            .par_iter()
            .zip(names.par_iter())
            .map(|(path, name)| {
                let began = Instant::now();
                let mut report = ImageReport::new(path, name.clone());
                if let Err(e) = process_one(path, name, cfg, outputs, &mut report) {
                    report = ImageReport::failed(path, name.clone(), format!("{e:#}"));
                }
                report.wall_seconds = began.elapsed().as_secs_f64();
                report
            })
            .collect()
    });

    let mut manifest: Vec<String> =
        images.iter().flat_map(|im| im.files.iter().map(|f| f.display().to_string())).collect();
    let plot_summary = outputs == Outputs::Plot;
    if plot_summary {
        manifest.push(plots::SUMMARY_FILE.into());
    }
    manifest.push("report.json".into());
    if cfg.format == Format::Csv {
        manifest.push("report.csv".into());
    }
    manifest.push("timings.json".into());

    let failed = images.iter().filter(|im| im.status == Status::Failed).count();
    let mut report = RunReport { images, failed, manifest, wall_seconds: 0.0 };
    if plot_summary {
        let taus: Vec<f64> = report.images.iter().flat_map(|im| im.vessels.iter().map(|r| r.tortuosity)).collect();
        fs::write(cfg.out.join(plots::SUMMARY_FILE), plots::tortuosity_histogram_svg(&taus))?;
    }
    fs::write(cfg.out.join("report.json"), report.to_json())?;
    if cfg.format == Format::Csv {
        fs::write(cfg.out.join("report.csv"), report.to_csv())?;
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    fs::write(cfg.out.join("timings.json"), report.timings_json())?;
    Ok(report)
}
