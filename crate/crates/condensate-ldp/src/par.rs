//! Minimal deterministic fan-out for independent jobs.
//!
//! Jobs are indexed 0..count and their results land back in index order, so
//! callers that derive one RNG stream per index get identical output for any
//! thread count.

pub(crate) fn run_indexed<T, F>(count: usize, threads: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(count.max(1));
    if threads == 1 {
        return (0..count).map(&job).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut rest = slots.as_mut_slice();
        let per = count.div_ceil(threads);
        let mut start = 0;
        while !rest.is_empty() {
            let take = per.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            rest = tail;
            let job = &job;
            scope.spawn(move || {
                for (i, slot) in head.iter_mut().enumerate() {
                    *slot = Some(job(start + i));
                }
            });
            start += take;
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}
