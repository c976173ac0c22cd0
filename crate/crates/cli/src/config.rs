use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};
use sinterscope::matching::Pairing;
use sinterscope::morphology::MajorityPasses;
use sinterscope::pipeline::Threshold;
use sinterscope::{PipelineConfig, DEFAULT_SCALE_UM_PER_PX};

/// Everything a run needs besides the list of subcommand-specific flags.
/// Loaded from TOML; the pipeline keys sit at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub inputs: Vec<String>,
    pub scale_um_per_px: f64,
    pub output: PathBuf,
    pub overlays: bool,
    /// Worker threads; all cores when unset.
    pub jobs: Option<usize>,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            scale_um_per_px: DEFAULT_SCALE_UM_PER_PX,
            output: PathBuf::from("sinterscope-out"),
            overlays: false,
            jobs: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
        let table: toml::Table = text.parse()?;
        let known = serde_json::to_value(RunConfig::default())?;
        for key in table.keys() {
            if known.get(key).is_none() {
                bail!("unknown key `{key}`");
            }
        }
        Ok(table.try_into()?)
    }

    pub fn validate(&self) -> sinterscope::Result<()> {
        if !(self.scale_um_per_px.is_finite() && self.scale_um_per_px > 0.0) {
            return Err(sinterscope::Error::InvalidParameter {
                name: "scale_um_per_px".into(),
                reason: format!(
                    "must be a positive number of µm per pixel, got {}",
                    self.scale_um_per_px
                ),
            });
        }
        if self.jobs == Some(0) {
            return Err(sinterscope::Error::InvalidParameter {
                name: "jobs".into(),
                reason: "must be at least 1".into(),
            });
        }
        self.pipeline.validate()
    }
}

/// Pipeline flags shared by the subcommands. Unset flags leave the config
/// file (or the default) in place.
#[derive(Debug, Default, Args)]
pub struct PipelineArgs {
    /// TOML config file
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Pixel scale, µm per pixel
    #[arg(long)]
    pub scale: Option<f64>,
    /// `auto` or a fixed threshold in [0, 1]
    #[arg(long)]
    pub threshold: Option<Threshold>,
    /// Auto threshold: small-particle diameter cutoff, µm
    #[arg(long)]
    pub small_particle_diameter_um: Option<f64>,
    /// Auto threshold: allowed small particles per reference field
    #[arg(long)]
    pub small_particle_count_limit: Option<f64>,
    /// Pass count or `until-stable`
    #[arg(long)]
    pub majority_passes: Option<MajorityPasses>,
    /// Pieces rounder than this are not separated
    #[arg(long)]
    pub circularity_threshold: Option<f64>,
    /// Holes smaller than this (equivalent diameter, µm) and round are filled
    #[arg(long)]
    pub hole_size_um: Option<f64>,
    /// Circularity a small hole needs to be filled
    #[arg(long)]
    pub hole_circularity: Option<f64>,
    /// Chain-code smoothing half window, moves
    #[arg(long)]
    pub chain_window: Option<usize>,
    /// Longest neck line, µm; adaptive when unset
    #[arg(long)]
    pub max_neck_um: Option<f64>,
    /// Adaptive neck limit as a fraction of the mean round-particle diameter
    #[arg(long)]
    pub max_neck_factor: Option<f64>,
    /// Inward-direction tolerance for pairing, degrees
    #[arg(long)]
    pub angle_tol_deg: Option<f64>,
    /// `greedy` or `optimal`
    #[arg(long)]
    pub pairing: Option<Pairing>,
    /// Test-line spacing of the headline contiguity, µm
    #[arg(long)]
    pub mesh_spacing_um: Option<f64>,
    /// Also report contiguity over the spacing sweep
    #[arg(long, overrides_with = "no_mesh_sweep")]
    pub mesh_sweep: bool,
    /// Headline spacing only
    #[arg(long)]
    pub no_mesh_sweep: bool,
    /// Report the filled variant
    #[arg(long, overrides_with = "no_filled")]
    pub filled: bool,
    /// Unfilled contiguity only
    #[arg(long)]
    pub no_filled: bool,
    /// Worker threads
    #[arg(long, short = 'j')]
    pub jobs: Option<usize>,
}

fn flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

impl PipelineArgs {
    /// Flags over config file over defaults.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        let p = &mut cfg.pipeline;
        set(&mut cfg.scale_um_per_px, &self.scale);
        set(&mut p.threshold, &self.threshold);
        set(
            &mut p.auto_threshold.small_particle_diameter_um,
            &self.small_particle_diameter_um,
        );
        set(
            &mut p.auto_threshold.small_particle_count_limit,
            &self.small_particle_count_limit,
        );
        set(&mut p.majority_passes, &self.majority_passes);
        let s = &mut p.segmentation;
        set(&mut s.circularity_threshold, &self.circularity_threshold);
        set(&mut s.hole_size_um, &self.hole_size_um);
        set(&mut s.hole_circularity, &self.hole_circularity);
        set(&mut s.chain_window, &self.chain_window);
        if self.max_neck_um.is_some() {
            s.max_neck_um = self.max_neck_um;
        }
        set(&mut s.max_neck_factor, &self.max_neck_factor);
        set(&mut s.angle_tol_deg, &self.angle_tol_deg);
        set(&mut s.pairing, &self.pairing);
        set(&mut p.mesh_spacing_um, &self.mesh_spacing_um);
        set(&mut p.mesh_sweep, &flag(self.mesh_sweep, self.no_mesh_sweep));
        set(&mut p.filled_variant, &flag(self.filled, self.no_filled));
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
    }
}
