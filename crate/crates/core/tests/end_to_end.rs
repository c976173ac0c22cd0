use sinterscope::binarize::{binarize_auto, binarize_fixed, AutoThresholdConfig};
use sinterscope::boundary::{detect_all, trace_boundaries};
use sinterscope::matching::{draw_necks, match_pairs, process_particles, Pairing, SegmentationConfig};
use sinterscope::morphology::{find_holes, label_components, majority_filter, MajorityPasses};
use sinterscope::pipeline::{annotations, Threshold};
use sinterscope::raster::{load_image, render_overlay, save_overlay, Annotation, Overlay, SEGMENT_COLOR};
use sinterscope::stereology::{contiguity_report, contiguity_sweep, count_interfaces, Direction, Variant};
use sinterscope::synthgen::{generate, oracle_counts, DiscSpec, InclusionSpec, SynthSpec};
use sinterscope::{analyze_gray, BinaryRaster, GrayRaster, PipelineConfig, Point};

fn segment(mask: &BinaryRaster) -> sinterscope::matching::SegmentationResult {
    process_particles(mask, &SegmentationConfig::default()).unwrap()
}

fn packing_12_7() -> SynthSpec {
    SynthSpec {
        seed: 42,
        width: 900,
        height: 700,
        noise: 0.01,
        random_count: 12,
        random_necks: 7,
        diameter_um: (20.0, 30.0),
        ..SynthSpec::default()
    }
}

#[test]
fn large_jpeg_keeps_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.jpg");
    let img = image::GrayImage::from_fn(2259, 1670, |x, y| image::Luma([((x ^ y) & 0xff) as u8]));
    img.save(&path).unwrap();
    let scale = sinterscope::DEFAULT_SCALE_UM_PER_PX;
    let g = load_image(&path, scale).unwrap();
    assert_eq!((g.width(), g.height()), (2259, 1670));
    assert!((g.scale() - 0.095175).abs() < 1e-5);
    assert!((g.area_um2() - 215.0 * 158.94).abs() < 5.0);
}

#[test]
fn rgb_pixels_become_luminance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgb.png");
    let img = image::RgbImage::from_fn(2, 1, |x, _| {
        if x == 0 {
            image::Rgb([255; 3])
        } else {
            image::Rgb([0; 3])
        }
    });
    img.save(&path).unwrap();
    assert_eq!(load_image(&path, 1.0).unwrap().pixels(), &[255, 0]);
    let one = dir.path().join("one.png");
    image::GrayImage::from_pixel(1, 1, image::Luma([0])).save(&one).unwrap();
    assert_eq!(load_image(&one, 1.0).unwrap().pixels(), &[0]);
}

#[test]
fn unsupported_and_missing_files_error() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("notes.png");
    std::fs::write(&txt, "not an image").unwrap();
    assert!(load_image(&txt, 1.0).is_err());
    assert!(load_image(dir.path().join("missing.png"), 1.0).is_err());
    assert!(load_image(&txt, 0.0).is_err());
}

#[test]
fn overlays() {
    let base = GrayRaster::new(8, 8, (0..64).map(|i| (i * 3) as u8).collect(), 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.png");
    save_overlay(&base, &Overlay::default(), &path).unwrap();
    let back = image::open(&path).unwrap().to_rgb8();
    for (i, p) in back.pixels().enumerate() {
        assert_eq!(p.0, [base.pixels()[i]; 3]);
    }

    let seg = Overlay {
        items: vec![Annotation::Segment {
            from: Point::new(0, 0),
            to: Point::new(0, 5),
            color: SEGMENT_COLOR,
        }],
    };
    let img = render_overlay(&GrayRaster::filled(8, 8, 0, 1.0).unwrap(), &seg);
    let colored: Vec<(u32, u32)> = img
        .enumerate_pixels()
        .filter(|(_, _, p)| p.0 == SEGMENT_COLOR)
        .map(|(x, y, _)| (x, y))
        .collect();
    assert_eq!(colored, (0..6).map(|y| (0, y)).collect::<Vec<_>>());

    let (_, truth) = generate(&SynthSpec::dumbbell(30.0, 50.0, 0.25)).unwrap();
    let ov = annotations(&segment(&truth.mask));
    assert_eq!(ov.markers(), 2);
    assert_eq!(ov.segments(), 1);
}

#[test]
fn fixed_thresholds() {
    let flat = GrayRaster::filled(9, 7, 128, 1.0).unwrap();
    assert_eq!(binarize_fixed(&flat, 0.2).unwrap().count_ones(), 63);
    let ramp = GrayRaster::new(16, 16, (0..=255).collect(), 1.0).unwrap();
    assert_eq!(binarize_fixed(&ramp, 0.0).unwrap().count_ones(), 256);

    let spec = SynthSpec {
        width: 300,
        height: 200,
        discs: vec![
            DiscSpec {
                x: 100.0,
                y: 100.0,
                radius_um: 15.0,
            },
            DiscSpec {
                x: 220.0,
                y: 90.0,
                radius_um: 10.0,
            },
        ],
        ..SynthSpec::default()
    };
    let (gray, truth) = generate(&spec).unwrap();
    assert_eq!(binarize_fixed(&gray, 0.2).unwrap(), truth.mask);
}

#[test]
fn bright_speckles_push_the_threshold_up() {
    let spec = SynthSpec {
        width: 400,
        height: 300,
        discs: vec![
            DiscSpec {
                x: 150.0,
                y: 150.0,
                radius_um: 20.0,
            },
            DiscSpec {
                x: 300.0,
                y: 140.0,
                radius_um: 15.0,
            },
        ],
        ..SynthSpec::default()
    };
    let (gray, truth) = generate(&spec).unwrap();
    let mut px = gray.pixels().to_vec();
    let mut placed = 0;
    let mut k = 0usize;
    while placed < 50 {
        k += 1;
        let i = (k * 7919) % px.len();
        let (x, y) = (i % 400, i / 400);
        // isolated binder pixels well away from the discs
        if x > 2 && y > 2 && x < 397 && y < 297 && truth.mask.get(x, y) == 0 && px[i] != 160 {
            let clear = (y - 2..=y + 2)
                .all(|yy| (x - 2..=x + 2).all(|xx| truth.mask.get(xx, yy) == 0 && px[yy * 400 + xx] != 160));
            if clear {
                px[i] = 160;
                placed += 1;
            }
        }
    }
    let speckled = GrayRaster::new(400, 300, px, 0.25).unwrap();
    let cfg = AutoThresholdConfig {
        small_particle_count_limit: 1.0,
        ..AutoThresholdConfig::default()
    };
    let a = binarize_auto(&speckled, &cfg).unwrap();
    assert!(!a.fallback);
    assert!(a.threshold > 160.0 / 255.0, "{}", a.threshold);
    assert_eq!(a.raster, truth.mask);
}

#[test]
fn majority_filter_removes_one_percent_noise() {
    let spec = SynthSpec {
        noise: 0.01,
        ..packing_12_7()
    };
    let (gray, truth) = generate(&spec).unwrap();
    let noisy = binarize_fixed(&gray, 0.5).unwrap();
    let flipped = noisy
        .bits()
        .iter()
        .zip(truth.mask.bits())
        .filter(|(a, b)| a != b)
        .count();
    assert!(flipped > 5000);
    let clean = majority_filter(&noisy, MajorityPasses::UntilStable);
    let reference = majority_filter(&truth.mask, MajorityPasses::UntilStable);
    let diff = clean
        .bits()
        .iter()
        .zip(reference.bits())
        .filter(|(a, b)| a != b)
        .count();
    // isolated flips vanish; flips touching an edge can nudge it by a pixel
    assert!(diff * 50 < flipped, "{diff} of {flipped}");
}

#[test]
fn inclusion_is_one_round_hole() {
    let spec = SynthSpec {
        width: 300,
        height: 300,
        discs: vec![DiscSpec {
            x: 150.0,
            y: 150.0,
            radius_um: 25.0,
        }],
        inclusions: vec![InclusionSpec {
            host: 0,
            diameter_um: 3.0,
            dx: 20.0,
            dy: -10.0,
        }],
        ..SynthSpec::default()
    };
    let (_, truth) = generate(&spec).unwrap();
    let holes = find_holes(&truth.mask);
    assert_eq!(holes.len(), 1);
    assert!(holes[0].circularity > 0.8);
    assert_eq!(holes[0].pixel_count, truth.mask_inclusion_px);
}

#[test]
fn dumbbell_binding_points_face_each_other() {
    let (_, truth) = generate(&SynthSpec::dumbbell(30.0, 50.0, 0.25)).unwrap();
    let labels = label_components(&truth.mask, 1);
    assert_eq!(labels.count(), 1);
    let chains = trace_boundaries(&labels, 1, &[]).unwrap();
    let pts = detect_all(&chains, &truth.mask, 5);
    assert_eq!(pts.len(), 2);
    let d = (pts[0].inward_direction - pts[1].inward_direction).rem_euclid(360.0);
    assert!((d - 180.0).abs() <= 30.0, "{d}");
    let waist_x = truth.necks[0].p0.0;
    for p in &pts {
        assert!((f64::from(p.position.x) + 0.5 - waist_x).abs() < 3.0);
    }

    let (pairs, unmatched) = match_pairs(&pts, &truth.mask, 20.0, 45.0, Pairing::Greedy).unwrap();
    assert_eq!((pairs.len(), unmatched.len()), (1, 0));
    let cut = draw_necks(&truth.mask, &pairs).unwrap();
    assert_eq!(label_components(&cut, 1).count(), 2);
    assert_eq!(draw_necks(&truth.mask, &[]).unwrap(), truth.mask);
}

#[test]
fn chain_of_three() {
    let (_, truth) = generate(&SynthSpec::chain(3, 30.0, 50.0, 0.25)).unwrap();
    let labels = label_components(&truth.mask, 1);
    let chains = trace_boundaries(&labels, 1, &[]).unwrap();
    let pts = detect_all(&chains, &truth.mask, 5);
    assert_eq!(pts.len(), 4);
    let seg = segment(&truth.mask);
    assert_eq!(seg.pairs.len(), 2);
    assert_eq!(seg.per_particle.len(), 3);
    assert_eq!(label_components(&seg.separated, 1).count(), 3);
}

#[test]
fn dumbbell_neck_length_matches_the_chord() {
    let scale = 0.25;
    let (_, truth) = generate(&SynthSpec::dumbbell(30.0, 50.0, scale)).unwrap();
    let seg = segment(&truth.mask);
    assert_eq!(seg.per_particle.len(), 2);
    assert_eq!(seg.pairs.len(), 1);
    let chord_um = 2.0 * (30.0f64 * 30.0 - 25.0 * 25.0).sqrt() * scale;
    assert!((truth.necks[0].waist_um - chord_um).abs() < 1e-9);
    assert!(
        (seg.pairs[0].neck_length - chord_um).abs() <= 2.0 * scale,
        "{}",
        seg.pairs[0].neck_length
    );
}

#[test]
fn packing_of_twelve_with_seven_necks() {
    let (gray, truth) = generate(&packing_12_7()).unwrap();
    let a = analyze_gray(&gray, &PipelineConfig::default()).unwrap();
    assert_eq!(truth.neck_count, 7);
    assert_eq!(a.summary.particle_count, 12);
    assert_eq!(a.segmentation.pairs.len(), 7);
}

#[test]
fn measured_wb_tracks_the_oracle() {
    let (gray, truth) = generate(&packing_12_7()).unwrap();
    let a = analyze_gray(&gray, &PipelineConfig::default()).unwrap();
    for dir in Direction::BOTH {
        let m = count_interfaces(&a.cleaned, &a.segmentation.separated, 1.0, dir).unwrap();
        let o = oracle_counts(&truth, 1.0, dir).unwrap();
        assert!(
            (m.n_wb_per_line - o.n_wb_per_line).abs() <= 0.05 * o.n_wb_per_line,
            "{dir:?}"
        );
    }
}

#[test]
fn contiguity_is_stable_across_meshes() {
    let spec = SynthSpec {
        seed: 7,
        width: 1200,
        height: 900,
        scale: 0.5,
        noise: 0.01,
        random_count: 10,
        random_necks: 7,
        diameter_um: (80.0, 120.0),
        ..SynthSpec::default()
    };
    let (gray, _) = generate(&spec).unwrap();
    let a = analyze_gray(&gray, &PipelineConfig::default()).unwrap();
    let reports = contiguity_sweep(
        &a.cleaned,
        &a.segmentation.separated,
        &[0.5, 1.0, 5.0, 10.0],
        Variant::Unfilled,
    )
    .unwrap();
    let c: Vec<f64> = reports.iter().map(|r| r.combined).collect();
    let spread = c.iter().copied().fold(f64::MIN, f64::max) - c.iter().copied().fold(f64::MAX, f64::min);
    assert!(spread <= 0.02, "{c:?}");
}

#[test]
fn spacing_of_the_full_image_is_one_line() {
    let (_, truth) = generate(&SynthSpec::dumbbell(30.0, 50.0, 0.25)).unwrap();
    let seg = segment(&truth.mask);
    let h = truth.mask.height() as f64 * 0.25;
    let r = contiguity_report(&truth.mask, &seg.separated, h, Variant::Unfilled).unwrap();
    assert_eq!(r.horizontal.lines, 1);
    assert_eq!(r.horizontal.per_line[0].position, truth.mask.height() / 2);
    assert_eq!(r.horizontal.total_ww, 1.0);
}

#[test]
fn seventeen_micron_discs() {
    let spec = SynthSpec {
        seed: 3,
        width: 800,
        height: 600,
        scale: 0.25,
        random_count: 15,
        random_necks: 0,
        diameter_um: (17.0, 17.0),
        ..SynthSpec::default()
    };
    let (gray, truth) = generate(&spec).unwrap();
    let a = analyze_gray(&gray, &PipelineConfig::default()).unwrap();
    assert_eq!(a.summary.particle_count, 15);
    assert!(
        (a.summary.particle_diameter.mean - 17.0).abs() <= 0.2,
        "{}",
        a.summary.particle_diameter.mean
    );
    let r = a.summary.unfilled.unwrap();
    assert_eq!(r.horizontal.total_ww + r.vertical.total_ww, 0.0);
    for dir in Direction::BOTH {
        assert_eq!(oracle_counts(&truth, 1.0, dir).unwrap().total_ww, 0.0);
    }
}

#[test]
fn small_inclusions_are_counted_exactly() {
    let spec = SynthSpec {
        width: 400,
        height: 300,
        scale: 0.1,
        discs: vec![
            DiscSpec {
                x: 120.0,
                y: 150.0,
                radius_um: 8.0,
            },
            DiscSpec {
                x: 290.0,
                y: 150.0,
                radius_um: 7.0,
            },
        ],
        inclusions: vec![
            InclusionSpec {
                host: 0,
                diameter_um: 1.4,
                dx: 15.0,
                dy: 10.0,
            },
            InclusionSpec {
                host: 1,
                diameter_um: 1.4,
                dx: -10.0,
                dy: -5.0,
            },
        ],
        ..SynthSpec::default()
    };
    let (gray, truth) = generate(&spec).unwrap();
    let cfg = PipelineConfig {
        threshold: Threshold::Fixed(0.2),
        ..PipelineConfig::default()
    };
    let a = analyze_gray(&gray, &cfg).unwrap();
    let ib = &a.summary.internal_binder;
    assert_eq!(ib.count, 2);
    assert_eq!(ib.pct_of_binder, truth.inclusion_pct_of_binder);
}

#[test]
fn disjoint_and_single_disc_rasters() {
    let spec = SynthSpec {
        width: 400,
        height: 400,
        discs: vec![DiscSpec {
            x: 200.0,
            y: 200.0,
            radius_um: 20.0,
        }],
        ..SynthSpec::default()
    };
    let (gray, truth) = generate(&spec).unwrap();
    let area = 400.0 * 400.0;
    let expected = 100.0 * (1.0 - std::f64::consts::PI * 80.0 * 80.0 / area);
    assert!((truth.binder_pct - expected).abs() < 1e-9);
    let a = analyze_gray(&gray, &PipelineConfig::default()).unwrap();
    assert_eq!(a.summary.particle_count, 1);
    assert!(a.segmentation.pairs.is_empty());
    assert!((a.summary.binder_pct - expected).abs() < 0.05);
    let all = BinaryRaster::filled(20, 20, true, 1.0).unwrap();
    assert!(contiguity_report(&all, &all, 1.0, Variant::Unfilled).is_err());
}
