//! Bounded worker pool. Workers run `work`; results come back to the
//! calling thread, which runs `sink` one item at a time.

#[cfg(feature = "parallel")]
fn build(jobs: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?)
}

/// Runs `f` with at most `jobs` threads available to the pipeline.
#[cfg(feature = "parallel")]
pub fn install<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> anyhow::Result<R> {
    Ok(build(jobs)?.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn install<R>(_jobs: Option<usize>, f: impl FnOnce() -> R) -> anyhow::Result<R> {
    Ok(f())
}

#[cfg(feature = "parallel")]
pub fn process<T, R, W, S>(items: &[T], jobs: Option<usize>, work: W, mut sink: S) -> anyhow::Result<()>
where
    T: Sync,
    R: Send,
    W: Fn(&T) -> R + Sync,
    S: FnMut(usize, R),
{
    use rayon::prelude::*;
    let pool = build(jobs)?;
    let (tx, rx) = std::sync::mpsc::sync_channel(pool.current_num_threads());
    std::thread::scope(|s| {
        let work = &work;
        s.spawn(move || {
            pool.install(|| {
                items.par_iter().enumerate().for_each_with(tx, |tx, (i, item)| {
                    // the receiver outlives every sender
                    let _ = tx.send((i, work(item)));
                });
            });
        });
        for (i, r) in rx {
            sink(i, r);
        }
    });
    Ok(())
}

#[cfg(not(feature = "parallel"))]
pub fn process<T, R, W, S>(items: &[T], _jobs: Option<usize>, work: W, mut sink: S) -> anyhow::Result<()>
where
    W: Fn(&T) -> R,
    S: FnMut(usize, R),
{
    for (i, item) in items.iter().enumerate() {
        sink(i, work(item));
    }
    Ok(())
}
