//! Pipeline stages on the largest validation packing. With the `parallel`
//! feature each stage runs on a one-thread pool and on the default pool;
//! `--no-default-features` benches the sequential build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sinterscope::binarize::binarize_auto;
use sinterscope::matching::process_particles;
use sinterscope::pipeline::{analyze_gray, PipelineConfig, SWEEP_SPACINGS_UM};
use sinterscope::stereology::{contiguity_sweep, Variant};
use sinterscope::synthgen::generate;
use sinterscope::validate::default_suite;

#[cfg(feature = "parallel")]
fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let n = all.current_num_threads();
    vec![("single".into(), one), (format!("pool-{n}"), all)]
}

#[cfg(feature = "parallel")]
fn each_mode(c: &mut Criterion, group: &str, f: impl Fn() + Sync) {
    let mut g = c.benchmark_group(group);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| pool.install(&f)));
    }
    g.finish();
}

#[cfg(not(feature = "parallel"))]
fn each_mode(c: &mut Criterion, group: &str, mut f: impl FnMut()) {
    let mut g = c.benchmark_group(group);
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(&mut f));
    g.finish();
}

fn stages(c: &mut Criterion) {
    let (_, spec) = default_suite().pop().unwrap();
    let (gray, _) = generate(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let a = analyze_gray(&gray, &cfg).unwrap();

    each_mode(c, "binarize_auto", || {
        std::hint::black_box(binarize_auto(&gray, &cfg.auto_threshold).unwrap());
    });
    each_mode(c, "process_particles", || {
        std::hint::black_box(process_particles(&a.cleaned, &cfg.segmentation).unwrap());
    });
    each_mode(c, "contiguity_sweep", || {
        let r = contiguity_sweep(
            &a.cleaned,
            &a.segmentation.separated,
            &SWEEP_SPACINGS_UM,
            Variant::Unfilled,
        );
        std::hint::black_box(r.unwrap());
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = stages
}
criterion_main!(benches);
