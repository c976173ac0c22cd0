//! Scoring the full pipeline against synthetic ground truth.

use std::fmt::Write as _;

use serde::Serialize;

use crate::matching::MatchedPair;
use crate::pipeline::{analyze_gray, Analysis, PipelineConfig};
use crate::stereology::{count_interfaces, Direction, Variant};
use crate::synthgen::{generate, oracle_contiguity, GroundTruth, SynthSpec, TrueNeck};
use crate::Result;

/// The bundled suite: packings of 5 to 30 particles with 1% noise, necks
/// 10-40% of the smaller diameter wide, some with internal inclusions.
pub fn default_suite() -> Vec<(String, SynthSpec)> {
    (0..24)
        .map(|k| {
            let count = 5 + (k * 25) / 23;
            let necks = ((count - 1) as f64 * [0.5, 0.65, 0.8][k % 3]).round() as usize;
            let diameter_um = (80.0, 120.0);
            let scale = 0.5;
            let mean_area = std::f64::consts::PI * 50.0 * 50.0;
            // particle phase near a third of the canvas
            let side_um = (count as f64 * mean_area / 0.33).sqrt();
            let side_px = (side_um / scale).ceil() as usize;
            let spec = SynthSpec {
                seed: 1000 + k as u64,
                width: side_px + side_px / 4,
                height: side_px - side_px / 8,
                scale,
                noise: 0.01,
                random_count: count,
                random_necks: necks,
                diameter_um,
                waist_fraction: (0.1, 0.4),
                random_inclusions: [0, 1, 3][k % 3],
                inclusion_diameter_um: (2.2, 2.8),
                ..SynthSpec::default()
            };
            (format!("suite-{k:02}-n{count}-k{necks}"), spec)
        })
        .collect()
}

/// Detected pairs matched one-to-one to true necks. A pair matches a neck
/// when its segment runs along the chord: both endpoints within
/// `max(4 px, chord / 5)` of the chord line, the segment spans the chord
/// midpoint, and neither end overhangs the chord by more than
/// `max(15 px, chord / 2)`. Overhang is expected because noise cleanup
/// fills the tips of narrow cusps.
pub fn match_necks(pairs: &[MatchedPair], truth: &[TrueNeck]) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let centre = |q: crate::Point| (f64::from(q.x) + 0.5, f64::from(q.y) + 0.5);
        let (a, b) = (centre(p.a.position), centre(p.b.position));
        for (j, n) in truth.iter().enumerate() {
            let chord = dist(n.p0, n.p1);
            if chord == 0.0 {
                continue;
            }
            let u = ((n.p1.0 - n.p0.0) / chord, (n.p1.1 - n.p0.1) / chord);
            let along = |q: (f64, f64)| (q.0 - n.p0.0) * u.0 + (q.1 - n.p0.1) * u.1;
            let across = |q: (f64, f64)| ((q.0 - n.p0.0) * u.1 - (q.1 - n.p0.1) * u.0).abs();
            let (ta, tb) = (along(a), along(b));
            let (lo, hi) = (ta.min(tb), ta.max(tb));
            let perp = across(a).max(across(b));
            let overhang = (-lo).max(hi - chord).max(0.0);
            let spans = lo <= chord / 2.0 && chord / 2.0 <= hi;
            if spans && perp <= (chord / 5.0).max(4.0) && overhang <= (chord / 2.0).max(15.0) {
                cands.push((perp + overhang, i, j));
            }
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_p, mut used_t) = (vec![false; pairs.len()], vec![false; truth.len()]);
    let mut out = Vec::new();
    for (_, i, j) in cands {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecScore {
    pub name: String,
    pub particles_true: usize,
    pub particles_found: usize,
    pub necks_true: usize,
    pub pairs_found: usize,
    pub necks_matched: usize,
    pub contiguity: Option<f64>,
    pub contiguity_oracle: Option<f64>,
    pub contiguity_error: Option<f64>,
    pub binder_pct: f64,
    pub binder_pct_true: f64,
    pub diameter_um: f64,
    pub diameter_um_true: f64,
    pub diameter_rel_error: f64,
    /// Max minus min combined contiguity over the sweep spacings.
    pub mesh_spread: Option<f64>,
    /// Test lines where filling internal binder raised the WB count.
    pub filled_violations: usize,
    pub filled_lines_checked: usize,
}

impl SpecScore {
    pub fn recall(&self) -> f64 {
        ratio(self.necks_matched, self.necks_true)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.necks_matched, self.pairs_found)
    }

    pub fn particle_count_error(&self) -> i64 {
        self.particles_found as i64 - self.particles_true as i64
    }

    pub fn binder_error_pp(&self) -> f64 {
        (self.binder_pct - self.binder_pct_true).abs()
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        n as f64 / d as f64
    }
}

/// Configuration the suite runs with: defaults plus the mesh sweep.
pub fn validation_config() -> PipelineConfig {
    PipelineConfig {
        mesh_sweep: true,
        ..PipelineConfig::default()
    }
}

/// Scores one analysis against the truth it was generated from.
pub fn score(name: &str, truth: &GroundTruth, a: &Analysis) -> Result<SpecScore> {
    let seg = &a.segmentation;
    let matched = match_necks(&seg.pairs, &truth.necks).len();
    let contiguity = a.summary.unfilled.as_ref().map(|r| r.combined);
    let oracle = oracle_contiguity(truth, a.config.mesh_spacing_um).ok();
    let error = contiguity.zip(oracle).map(|(c, o)| (c - o).abs());
    let unfilled: Vec<f64> = a
        .mesh_sweep
        .iter()
        .filter(|r| r.variant == Variant::Unfilled)
        .map(|r| r.combined)
        .collect();
    let spread = (!unfilled.is_empty())
        .then(|| unfilled.iter().copied().fold(f64::MIN, f64::max) - unfilled.iter().copied().fold(f64::MAX, f64::min));
    let fp = &a.filled;
    let mut violations = 0;
    let mut checked = 0;
    let mut spacings = a.config.sweep_spacings(a.cleaned.scale());
    spacings.push(a.config.mesh_spacing_um);
    for s in spacings {
        for dir in Direction::BOTH {
            let u = count_interfaces(&a.cleaned, &seg.separated, s, dir)?;
            let f = count_interfaces(&fp.initial, &fp.separated, s, dir)?;
            for (lu, lf) in u.per_line.iter().zip(&f.per_line) {
                checked += 1;
                if lf.wb > lu.wb {
                    violations += 1;
                }
            }
        }
    }
    let d = a.summary.particle_diameter.mean;
    Ok(SpecScore {
        name: name.to_string(),
        particles_true: truth.particle_count,
        particles_found: a.summary.particle_count,
        necks_true: truth.neck_count,
        pairs_found: seg.pairs.len(),
        necks_matched: matched,
        contiguity,
        contiguity_oracle: oracle,
        contiguity_error: error,
        binder_pct: a.summary.binder_pct,
        binder_pct_true: truth.binder_pct,
        diameter_um: d,
        diameter_um_true: truth.diameter_mean_um,
        diameter_rel_error: (d - truth.diameter_mean_um).abs() / truth.diameter_mean_um,
        mesh_spread: spread,
        filled_violations: violations,
        filled_lines_checked: checked,
    })
}

/// Generates, analyzes and scores one spec.
pub fn validate_spec(name: &str, spec: &SynthSpec, cfg: &PipelineConfig) -> Result<SpecScore> {
    let (gray, truth) = generate(spec)?;
    let a = analyze_gray(&gray, cfg)?;
    score(name, &truth, &a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scorecard {
    pub specs: Vec<SpecScore>,
    pub recall: f64,
    pub precision: f64,
    pub mean_contiguity_error: f64,
    pub max_contiguity_error: f64,
    pub max_mesh_spread: f64,
    pub max_binder_error_pp: f64,
    pub max_diameter_rel_error: f64,
    pub filled_violations: usize,
}

impl Scorecard {
    pub fn new(specs: Vec<SpecScore>) -> Scorecard {
        let sum = |f: fn(&SpecScore) -> usize| specs.iter().map(f).sum::<usize>();
        let errs: Vec<f64> = specs.iter().filter_map(|s| s.contiguity_error).collect();
        let max = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
        Scorecard {
            recall: ratio(sum(|s| s.necks_matched), sum(|s| s.necks_true)),
            precision: ratio(sum(|s| s.necks_matched), sum(|s| s.pairs_found)),
            mean_contiguity_error: if errs.is_empty() {
                0.0
            } else {
                errs.iter().sum::<f64>() / errs.len() as f64
            },
            max_contiguity_error: max(&mut errs.iter().copied()),
            max_mesh_spread: max(&mut specs.iter().filter_map(|s| s.mesh_spread)),
            max_binder_error_pp: max(&mut specs.iter().map(SpecScore::binder_error_pp)),
            max_diameter_rel_error: max(&mut specs.iter().map(|s| s.diameter_rel_error)),
            filled_violations: sum(|s| s.filled_violations),
            specs,
        }
    }

    /// Fixed-width text table, one row per spec plus a totals line.
    pub fn table(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "{:<22} {:>5} {:>5} {:>5} {:>5} {:>6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "spec", "P", "P*", "N", "N*", "recall", "prec", "C", "C*", "|dC|", "dB pp", "dD %", "spread"
        );
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        for s in &self.specs {
            let _ = writeln!(
                t,
                "{:<22} {:>5} {:>5} {:>5} {:>5} {:>6.3} {:>6.3} {:>7} {:>7} {:>7} {:>7.3} {:>7.3} {:>7}",
                s.name,
                s.particles_true,
                s.particles_found,
                s.necks_true,
                s.pairs_found,
                s.recall(),
                s.precision(),
                f(s.contiguity),
                f(s.contiguity_oracle),
                f(s.contiguity_error),
                s.binder_error_pp(),
                100.0 * s.diameter_rel_error,
                f(s.mesh_spread),
            );
        }
        let _ = writeln!(
            t,
            "recall {:.4}  precision {:.4}  mean |dC| {:.4}  max |dC| {:.4}  max spread {:.4}  max dB {:.3} pp  max dD {:.3} %  filled violations {}",
            self.recall,
            self.precision,
            self.mean_contiguity_error,
            self.max_contiguity_error,
            self.max_mesh_spread,
            self.max_binder_error_pp,
            100.0 * self.max_diameter_rel_error,
            self.filled_violations
        );
        t
    }
}

/// Runs and scores every spec; specs are independent and run in parallel.
pub fn run_suite(specs: &[(String, SynthSpec)], cfg: &PipelineConfig) -> Result<Scorecard> {
    let scores = crate::par::map(specs, |(name, spec)| validate_spec(name, spec, cfg));
    Ok(Scorecard::new(scores.into_iter().collect::<Result<_>>()?))
}
