//! Command-line driver: batch analysis, synthetic generation, validation
//! against ground truth, and threshold/mesh sweeps.

mod config;
mod pool;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde_json::Value;
use sinterscope::binarize::threshold_sweep;
use sinterscope::raster::{load_image, save_gray, save_overlay, Overlay};
use sinterscope::synthgen::{generate, SynthSpec};
use sinterscope::validate::{default_suite, run_suite};
use sinterscope::{analyze_gray, report, GrayRaster};

use config::{PipelineArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "sinterscope",
    version,
    about = "Segmentation and contiguity analysis of sintered two-phase micrographs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze micrographs and write per-image reports plus a batch summary
    Analyze {
        /// Image files, directories or glob patterns
        inputs: Vec<String>,
        /// Output directory
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
        /// Write binary, cleaned, separated and annotated PNGs
        #[arg(long, overrides_with = "no_overlays")]
        overlays: bool,
        /// Skip the overlay PNGs
        #[arg(long)]
        no_overlays: bool,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Render synthetic microstructures with ground truth
    Synthgen {
        /// Spec files
        specs: Vec<PathBuf>,
        /// Also render the bundled validation suite
        #[arg(long)]
        suite: bool,
        #[arg(long, short = 'o', default_value = "synthgen-out")]
        output: PathBuf,
    },
    /// Score the pipeline on synthetic specs (the bundled suite by default)
    Validate {
        /// Spec files
        specs: Vec<PathBuf>,
        /// Write the scorecard as JSON here
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Write threshold-sweep and mesh-sweep curves as CSV
    Sweep {
        /// Image files, directories or glob patterns
        inputs: Vec<String>,
        /// Output directory
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn fatal(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze {
            inputs,
            output,
            overlays,
            no_overlays,
            pipeline,
        } => resolve(&pipeline, inputs, output).and_then(|mut cfg| {
            if overlays || no_overlays {
                cfg.overlays = overlays;
            }
            analyze(&cfg)
        }),
        Command::Sweep {
            inputs,
            output,
            pipeline,
        } => resolve(&pipeline, inputs, output).and_then(|cfg| sweep(&cfg)),
        Command::Synthgen { specs, suite, output } => synthgen(&specs, suite, &output),
        Command::Validate {
            specs,
            output,
            pipeline,
        } => validate(&specs, output.as_deref(), &pipeline),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn resolve(args: &PipelineArgs, inputs: Vec<String>, output: Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut cfg = args.resolve().map_err(usage)?;
    if !inputs.is_empty() {
        cfg.inputs = inputs;
    }
    if let Some(o) = output {
        cfg.output = o;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Expands directories and glob patterns; plain paths pass through so a
/// missing file is reported as a per-image failure.
fn expand_inputs(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        let path = Path::new(p);
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else if p.contains(['*', '?', '[']) {
            for entry in glob::glob(p).with_context(|| format!("bad glob `{p}`"))? {
                out.push(entry?);
            }
        } else {
            out.push(path.to_path_buf());
        }
    }
    let mut seen = HashSet::new();
    out.retain(|p| seen.insert(p.clone()));
    Ok(out)
}

/// Inputs and their unique output stems.
fn named_inputs(cfg: &RunConfig) -> Result<Vec<(String, PathBuf)>, Failure> {
    let paths = expand_inputs(&cfg.inputs).map_err(usage)?;
    if paths.is_empty() {
        return Err(usage(anyhow!("no input images given")));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in paths {
        let stem = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| usage(anyhow!("cannot name output for {}", p.display())))?
            .to_string();
        if !seen.insert(stem.clone()) {
            return Err(usage(anyhow!(
                "two inputs share the name `{stem}`; outputs would collide"
            )));
        }
        out.push((stem, p));
    }
    Ok(out)
}

struct ImageOutput {
    report: Value,
    files: Vec<(String, String)>,
    images: Vec<(String, GrayRaster, Overlay)>,
    line: String,
}

fn analyze_one(stem: &str, path: &Path, cfg: &RunConfig) -> anyhow::Result<ImageOutput> {
    let gray = load_image(path, cfg.scale_um_per_px)?;
    let a = analyze_gray(&gray, &cfg.pipeline)?;
    let report = report::analysis_json(stem, &a)?;
    let mut files = vec![
        (format!("{stem}.json"), report::to_json_string(&report)?),
        (format!("{stem}.particles.csv"), report::particles_csv(&a)),
    ];
    if let Some(curve) = &a.threshold_curve {
        files.push((format!("{stem}.threshold.csv"), report::threshold_curve_csv(curve)));
    }
    if !a.mesh_sweep.is_empty() {
        files.push((format!("{stem}.mesh.csv"), report::mesh_sweep_csv(&a.mesh_sweep)));
    }
    let images = if cfg.overlays {
        a.overlays(&gray)
            .into_iter()
            .map(|(kind, base, ov)| (format!("{stem}.{kind}.png"), base, ov))
            .collect()
    } else {
        Vec::new()
    };
    let c = a
        .summary
        .unfilled
        .as_ref()
        .map_or("undefined".to_string(), |r| report::fmt6(r.combined));
    let line = format!(
        "{stem}: {} particles, {} necks, contiguity {c}",
        a.summary.particle_count,
        a.segmentation.pairs.len()
    );
    Ok(ImageOutput {
        report,
        files,
        images,
        line,
    })
}

fn write_outputs(dir: &Path, out: &ImageOutput) -> anyhow::Result<()> {
    for (name, text) in &out.files {
        fs::write(dir.join(name), text).with_context(|| format!("cannot write {name}"))?;
    }
    for (name, base, ov) in &out.images {
        save_overlay(base, ov, dir.join(name))?;
    }
    Ok(())
}

fn analyze(cfg: &RunConfig) -> Result<ExitCode, Failure> {
    let inputs = named_inputs(cfg)?;
    fs::create_dir_all(&cfg.output)
        .with_context(|| format!("cannot create {}", cfg.output.display()))
        .map_err(fatal)?;
    let mut reports: Vec<Option<(String, Value)>> = vec![None; inputs.len()];
    let mut failed = 0;
    pool::process(
        &inputs,
        cfg.jobs,
        |(stem, path)| analyze_one(stem, path, cfg),
        |i, result| {
            let (stem, path) = &inputs[i];
            match result.and_then(|out| write_outputs(&cfg.output, &out).map(|()| out)) {
                Ok(out) => {
                    println!("{}", out.line);
                    reports[i] = Some((stem.clone(), out.report));
                }
                Err(e) => {
                    failed += 1;
                    eprintln!("error: {}: {e:#}", path.display());
                }
            }
        },
    )
    .map_err(fatal)?;
    let ok: Vec<(String, Value)> = reports.into_iter().flatten().collect();
    if !ok.is_empty() {
        let (csv, json) = report::batch_summary(&ok);
        let write = || -> anyhow::Result<()> {
            fs::write(cfg.output.join("summary.csv"), csv)?;
            fs::write(cfg.output.join("summary.json"), report::to_json_string(&json)?)?;
            Ok(())
        };
        write().map_err(fatal)?;
    }
    eprintln!(
        "{} of {} images analyzed; reports in {}",
        ok.len(),
        inputs.len(),
        cfg.output.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sweep(cfg: &RunConfig) -> Result<ExitCode, Failure> {
    let inputs = named_inputs(cfg)?;
    fs::create_dir_all(&cfg.output)
        .with_context(|| format!("cannot create {}", cfg.output.display()))
        .map_err(fatal)?;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.mesh_sweep = true;
    let mut failed = 0;
    pool::process(
        &inputs,
        cfg.jobs,
        |(stem, path)| -> anyhow::Result<(String, Vec<(String, String)>)> {
            let gray = load_image(path, cfg.scale_um_per_px)?;
            let a = analyze_gray(&gray, &pipeline)?;
            let curve = a
                .threshold_curve
                .clone()
                .unwrap_or_else(|| threshold_sweep(&gray, &pipeline.auto_threshold));
            let line = format!("{stem}: threshold {}", report::fmt6(a.threshold));
            Ok((
                line,
                vec![
                    (format!("{stem}.threshold.csv"), report::threshold_curve_csv(&curve)),
                    (format!("{stem}.mesh.csv"), report::mesh_sweep_csv(&a.mesh_sweep)),
                ],
            ))
        },
        |i, result| {
            let written = result.and_then(|(line, files)| {
                for (name, text) in files {
                    fs::write(cfg.output.join(&name), text).with_context(|| format!("cannot write {name}"))?;
                }
                Ok(line)
            });
            match written {
                Ok(line) => println!("{line}"),
                Err(e) => {
                    failed += 1;
                    eprintln!("error: {}: {e:#}", inputs[i].1.display());
                }
            }
        },
    )
    .map_err(fatal)?;
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn load_specs(paths: &[PathBuf]) -> Result<Vec<(String, SynthSpec)>, Failure> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("spec").to_string();
            SynthSpec::load(p)
                .with_context(|| format!("{}", p.display()))
                .map(|s| (name, s))
                .map_err(usage)
        })
        .collect()
}

fn synthgen(paths: &[PathBuf], suite: bool, output: &Path) -> Result<ExitCode, Failure> {
    let mut specs = load_specs(paths)?;
    if suite {
        specs.extend(default_suite());
    }
    if specs.is_empty() {
        return Err(usage(anyhow!("give spec files or --suite")));
    }
    fs::create_dir_all(output)
        .with_context(|| format!("cannot create {}", output.display()))
        .map_err(fatal)?;
    for (name, spec) in &specs {
        let run = || -> anyhow::Result<()> {
            let (gray, truth) = generate(spec)?;
            save_gray(&gray, output.join(format!("{name}.png")))?;
            let truth_json = report::round_value(serde_json::to_value(&truth)?);
            fs::write(
                output.join(format!("{name}.truth.json")),
                report::to_json_string(&truth_json)?,
            )?;
            fs::write(output.join(format!("{name}.spec")), spec.to_text())?;
            println!(
                "{name}: {}x{} px at {} µm/px, {} particles, {} necks",
                gray.width(),
                gray.height(),
                spec.scale,
                truth.particle_count,
                truth.neck_count
            );
            Ok(())
        };
        run().with_context(|| name.clone()).map_err(fatal)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(paths: &[PathBuf], output: Option<&Path>, args: &PipelineArgs) -> Result<ExitCode, Failure> {
    let mut cfg = args.resolve().map_err(usage)?;
    // the sweep feeds the mesh-spread column; specs carry their own scale
    cfg.pipeline.mesh_sweep = true;
    cfg.validate().map_err(usage)?;
    let specs = if paths.is_empty() {
        default_suite()
    } else {
        load_specs(paths)?
    };
    let card = pool::install(cfg.jobs, || run_suite(&specs, &cfg.pipeline))
        .map_err(fatal)?
        .map_err(fatal)?;
    print!("{}", card.table());
    if let Some(path) = output {
        let v = report::round_value(serde_json::to_value(&card).map_err(fatal)?);
        fs::write(path, report::to_json_string(&v).map_err(fatal)?)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(fatal)?;
    }
    Ok(ExitCode::SUCCESS)
}
