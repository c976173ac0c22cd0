//! Acceptance run. Prints one PASS/FAIL line per check and fails at the end
//! if any check failed. Everything runs inside a single test so the suite
//! timing is not disturbed by other tests in this binary.

use std::time::{Duration, Instant};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use sinterscope::binarize::binarize_fixed;
use sinterscope::boundary::{trace_boundaries, BindingPoint, BoundaryKind};
use sinterscope::matching::{match_pairs, Pairing};
use sinterscope::morphology::{find_holes, label_components, majority_filter, majority_pass, MajorityPasses};
use sinterscope::pipeline::{analyze_gray, PipelineConfig};
use sinterscope::report::{analysis_json, particles_csv, to_json_string};
use sinterscope::stereology::{contiguity, count_interfaces, mean_sd, Direction};
use sinterscope::synthgen::{generate, SynthSpec};
use sinterscope::validate::{default_suite, run_suite, validation_config, Scorecard};
use sinterscope::{BinaryRaster, GrayRaster, Point};

/// Written to the raw stderr handle so the lines show without `--nocapture`.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stderr(), $($t)*);
    }};
}

#[derive(Default)]
struct Ledger {
    failed: Vec<String>,
}

impl Ledger {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        say!("{} {what}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(what);
        }
    }
}

/// Reference per-image interface counts with their contiguity, then the
/// average rows. Columns are (N_WW, N_WB, C).
const REFERENCE: [[(f64, f64, f64); 3]; 4] = [
    [(2.16, 18.53, 0.189), (2.73, 18.19, 0.231), (2.80, 18.28, 0.234)],
    [(3.75, 15.99, 0.319), (3.30, 16.24, 0.289), (3.77, 15.93, 0.321)],
    [(2.39, 18.06, 0.209), (3.06, 17.52, 0.259), (2.85, 18.16, 0.239)],
    [(4.04, 15.43, 0.343), (3.80, 15.23, 0.333), (3.94, 15.58, 0.336)],
];
/// Average rows: (N_WW mean, sd), (N_WB mean, sd), (C mean, sd).
const REFERENCE_AVERAGES: [[(f64, f64); 3]; 4] = [
    [(2.56, 0.35), (18.33, 0.18), (0.218, 0.025)],
    [(3.61, 0.27), (16.05, 0.16), (0.310, 0.017)],
    [(2.77, 0.34), (17.91, 0.34), (0.236, 0.025)],
    [(3.93, 0.12), (15.41, 0.18), (0.337, 0.005)],
];

fn arithmetic(l: &mut Ledger) {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (cols, avg) in REFERENCE.iter().zip(&REFERENCE_AVERAGES) {
        for &(ww, wb, c) in cols {
            worst = worst.max((contiguity(ww, wb).unwrap() - c).abs());
            n += 1;
        }
        worst = worst.max((contiguity(avg[0].0, avg[1].0).unwrap() - avg[2].0).abs());
        n += 1;
    }
    l.check(
        worst <= 0.001,
        format!("contiguity of {n} reference count pairs, max error {worst:.5}"),
    );

    // average rows are sample mean and sd of the per-image columns
    let mut worst_mean: f64 = 0.0;
    let mut worst_sd: f64 = 0.0;
    for (cols, avg) in REFERENCE.iter().zip(&REFERENCE_AVERAGES) {
        let rows: [Vec<f64>; 3] = [
            cols.iter().map(|c| c.0).collect(),
            cols.iter().map(|c| c.1).collect(),
            cols.iter().map(|c| c.2).collect(),
        ];
        for (row, &(mean, sd)) in rows.iter().zip(avg) {
            let (m, s) = mean_sd(row);
            // printed to the precision of the row
            let ulp = if mean < 1.0 { 0.001 } else { 0.01 };
            worst_mean = worst_mean.max((m - mean).abs() / ulp);
            worst_sd = worst_sd.max((s - sd).abs() / ulp);
        }
    }
    l.check(
        worst_mean <= 0.5 + 1e-9 && worst_sd <= 1.0,
        format!("reference averages as mean and sample sd, max deviation {worst_mean:.2} / {worst_sd:.2} of the printed digit"),
    );
    let (m, s) = mean_sd(&[17.40, 16.64, 16.70]);
    l.check(
        (m - 16.91).abs() <= 0.005 && (s - 0.42).abs() <= 0.005,
        format!("reference diameter row {m:.3} ± {s:.3} (printed 16.91 ± 0.42)"),
    );
}

fn suite_checks(l: &mut Ledger) {
    let suite = default_suite();
    let counts: Vec<usize> = suite.iter().map(|(_, s)| s.random_count).collect();
    let shaped = suite.len() >= 20
        && counts.iter().all(|c| (5..=30).contains(c))
        && counts.contains(&5)
        && counts.contains(&30)
        && suite
            .iter()
            .all(|(_, s)| s.noise == 0.01 && s.waist_fraction == (0.1, 0.4));
    l.check(
        shaped,
        format!(
            "suite of {} specs, {}-{} particles, 1% noise, waists 10-40%",
            suite.len(),
            counts.iter().min().unwrap(),
            counts.iter().max().unwrap()
        ),
    );

    let t = Instant::now();
    let card: Scorecard = run_suite(&suite, &validation_config()).unwrap();
    let elapsed = t.elapsed();
    say!("{}", card.table());

    l.check(
        card.recall >= 0.9 && card.precision >= 0.9,
        format!(
            "neck recall {:.4}, precision {:.4} (need 0.90)",
            card.recall, card.precision
        ),
    );
    l.check(
        elapsed < Duration::from_secs(60),
        format!("suite runtime {:.1} s (need < 60)", elapsed.as_secs_f64()),
    );
    let all_defined = card.specs.iter().all(|s| s.contiguity_error.is_some());
    l.check(
        all_defined && card.max_contiguity_error <= 0.03,
        format!(
            "per-spec contiguity error max {:.4} (need 0.03)",
            card.max_contiguity_error
        ),
    );
    l.check(
        card.mean_contiguity_error <= 0.02,
        format!("mean contiguity error {:.4} (need 0.02)", card.mean_contiguity_error),
    );
    let spreads = card.specs.iter().all(|s| s.mesh_spread.is_some());
    l.check(
        spreads && card.max_mesh_spread <= 0.02,
        format!(
            "mesh spread over 1 px, 0.5, 1, 2, 5, 10 µm max {:.4} (need 0.02)",
            card.max_mesh_spread
        ),
    );
    l.check(
        card.max_binder_error_pp <= 0.5,
        format!(
            "binder fraction error max {:.3} pp (need 0.5)",
            card.max_binder_error_pp
        ),
    );
    l.check(
        card.max_diameter_rel_error <= 0.02,
        format!(
            "mean diameter error max {:.3}% (need 2%)",
            100.0 * card.max_diameter_rel_error
        ),
    );
    let lines: usize = card.specs.iter().map(|s| s.filled_lines_checked).sum();
    l.check(
        card.filled_violations == 0 && lines > 0,
        format!(
            "filled n_wb above unfilled on {} of {lines} test lines",
            card.filled_violations
        ),
    );
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn property<S: Strategy>(
    l: &mut Ledger,
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    let result = runner(cases).run(&strategy, test);
    match result {
        Ok(()) => l.check(true, format!("{name} ({cases} cases)")),
        Err(e) => l.check(false, format!("{name}: {e}")),
    }
}

fn gray() -> impl Strategy<Value = GrayRaster> {
    (1usize..32, 1usize..32)
        .prop_flat_map(|(w, h)| vec(any::<u8>(), w * h).prop_map(move |px| GrayRaster::new(w, h, px, 1.0).unwrap()))
}

/// Random rasters with roughly `ones` percent particle pixels.
fn binary(max: usize, ones: u32) -> impl Strategy<Value = BinaryRaster> {
    (1..max, 1..max).prop_flat_map(move |(w, h)| {
        vec(0u32..100, w * h).prop_map(move |v| {
            BinaryRaster::new(w, h, v.into_iter().map(|x| u8::from(x < ones)).collect(), 1.0).unwrap()
        })
    })
}

fn points(w: usize, h: usize) -> impl Strategy<Value = Vec<BindingPoint>> {
    vec((0..w as i32, 0..h as i32, 0.0f64..360.0), 0..14).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (x, y, dir))| BindingPoint {
                position: Point::new(x, y),
                inward_direction: dir,
                turn_angle: 120.0,
                chain: 0,
                index: k,
            })
            .collect()
    })
}

fn invariants(l: &mut Ledger) {
    property(
        l,
        "binarization is monotone in the threshold",
        256,
        (gray(), 0.0f64..=1.0, 0.0f64..=1.0),
        |(img, a, b)| {
            let (lo, hi) = (a.min(b), a.max(b));
            let bl = binarize_fixed(&img, lo).unwrap();
            let bh = binarize_fixed(&img, hi).unwrap();
            prop_assert!(bh.bits().iter().zip(bl.bits()).all(|(&h, &l)| h <= l));
            Ok(())
        },
    );

    // synchronous voting ends in a fixed point or a period-2 orbit
    let fixed = std::cell::Cell::new(0u32);
    property(
        l,
        "majority filter is idempotent once converged",
        256,
        binary(40, 50),
        |img| {
            let mut prev = img.clone();
            let (mut cur, _) = majority_pass(&img);
            for _ in 0..1000 {
                let (next, changed) = majority_pass(&cur);
                if changed == 0 {
                    fixed.set(fixed.get() + 1);
                    prop_assert_eq!(&majority_filter(&cur, MajorityPasses::UntilStable), &cur);
                    prop_assert_eq!(&majority_filter(&cur, MajorityPasses::Fixed(3)), &cur);
                    return Ok(());
                }
                if next == prev {
                    prop_assert_eq!(majority_pass(&next).0, cur);
                    return Ok(());
                }
                prev = std::mem::replace(&mut cur, next);
            }
            Err(TestCaseError::fail("neither a fixed point nor a 2-cycle"))
        },
    );
    say!(
        "     {} of 256 random rasters reached a fixed point, the rest a 2-cycle",
        fixed.get()
    );

    property(
        l,
        "chain codes close on their start pixel",
        128,
        binary(30, 60),
        |img| {
            let labels = label_components(&img, 1);
            let holes = find_holes(&img);
            for c in 1..=labels.count() {
                for cc in trace_boundaries(&labels, c, &holes).unwrap() {
                    prop_assert!(cc.closes(), "component {} {:?}", c, cc.kind);
                    for p in cc.points() {
                        let on = labels.at(p) == c;
                        prop_assert!(on, "{:?} left component {}", p, c);
                    }
                    if cc.kind == BoundaryKind::Outer && cc.moves.is_empty() {
                        let single = labels.labels().iter().filter(|&&x| x == c).count() == 1;
                        prop_assert!(single);
                    }
                }
            }
            Ok(())
        },
    );

    let matching = binary(40, 85).prop_flat_map(|img| {
        let (w, h) = (img.width(), img.height());
        (Just(img), points(w, h), 1.0f64..30.0, 5.0f64..=90.0)
    });
    property(
        l,
        "partial matching uses each point at most once",
        256,
        matching,
        |(img, pts, dist, tol)| {
            let mut counts = [0usize; 2];
            for (k, pairing) in [Pairing::Greedy, Pairing::Optimal].into_iter().enumerate() {
                let (pairs, unmatched) = match_pairs(&pts, &img, dist, tol, pairing).unwrap();
                let mut used = vec![false; pts.len()];
                for p in &pairs {
                    prop_assert!(p.a_index < p.b_index);
                    for i in [p.a_index, p.b_index] {
                        prop_assert!(!used[i], "point {} used twice", i);
                        used[i] = true;
                    }
                    prop_assert_eq!(p.a, pts[p.a_index]);
                    prop_assert_eq!(p.b, pts[p.b_index]);
                    prop_assert!(p.neck_length <= dist + 1e-9);
                }
                prop_assert_eq!(unmatched.len() + 2 * pairs.len(), pts.len());
                let left: Vec<BindingPoint> = pts.iter().zip(&used).filter(|(_, &u)| !u).map(|(p, _)| *p).collect();
                prop_assert_eq!(&unmatched, &left);
                counts[k] = pairs.len();
            }
            prop_assert!(counts[1] >= counts[0], "optimal {} < greedy {}", counts[1], counts[0]);
            Ok(())
        },
    );

    let pair = binary(36, 55).prop_flat_map(|img| {
        let n = img.width() * img.height();
        (Just(img), vec(0u32..100, n), 1.0f64..6.0)
    });
    property(
        l,
        "directional counts are symmetric under transpose",
        256,
        pair,
        |(init, cut, spacing)| {
            let bits: Vec<u8> = init
                .bits()
                .iter()
                .zip(&cut)
                .map(|(&b, &c)| u8::from(b == 1 && c >= 10))
                .collect();
            let sep = BinaryRaster::new(init.width(), init.height(), bits, 1.0).unwrap();
            let (it, st) = (init.transpose(), sep.transpose());
            for (dir, other) in [
                (Direction::Horizontal, Direction::Vertical),
                (Direction::Vertical, Direction::Horizontal),
            ] {
                let a = count_interfaces(&init, &sep, spacing, dir).unwrap();
                let b = count_interfaces(&it, &st, spacing, other).unwrap();
                prop_assert_eq!(&a.per_line, &b.per_line);
                prop_assert_eq!(a.total_wb, b.total_wb);
                prop_assert_eq!(a.total_ww, b.total_ww);
                prop_assert_eq!(a.lines, b.lines);
            }
            Ok(())
        },
    );

    let specs = (any::<u64>(), 2usize..5).prop_map(|(seed, count)| SynthSpec {
        seed,
        width: 520,
        height: 420,
        scale: 0.5,
        noise: 0.01,
        random_count: count,
        random_necks: count - 1,
        diameter_um: (50.0, 70.0),
        random_inclusions: 1,
        inclusion_diameter_um: (2.2, 2.8),
        ..SynthSpec::default()
    });
    property(l, "reports are byte-identical on re-run", 8, specs, |spec| {
        let cfg = PipelineConfig {
            mesh_sweep: true,
            ..PipelineConfig::default()
        };
        let mut outs = Vec::new();
        for _ in 0..2 {
            let (g, truth) = generate(&spec).unwrap();
            let a = analyze_gray(&g, &cfg).unwrap();
            let json = to_json_string(&analysis_json("run", &a).unwrap()).unwrap();
            outs.push((g, truth, json, particles_csv(&a)));
        }
        prop_assert!(outs[0] == outs[1]);
        Ok(())
    });
}

#[test]
fn acceptance() {
    let mut l = Ledger::default();
    say!();
    arithmetic(&mut l);
    suite_checks(&mut l);
    invariants(&mut l);
    say!("{} checks failed", l.failed.len());
    assert!(l.failed.is_empty(), "failed: {:#?}", l.failed);
}
