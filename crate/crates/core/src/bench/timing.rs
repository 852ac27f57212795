use std::time::Instant;

use crate::backend::Backend;

/// Wall time of `thunk` in milliseconds, bracketed by synchronizations so
/// deferred work is included. The thunk's output is returned after the
/// clock stops.
pub fn time_once<T, E>(backend: &dyn Backend, thunk: impl FnOnce() -> Result<T, E>) -> Result<(f64, T), E> {
    backend.synchronize();
    let start = Instant::now();
    let out = thunk()?;
    backend.synchronize();
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((ms, out))
}

/// Like [`time_once`] without the closing synchronization: measures only
/// submission on asynchronous backends. Used to check the harness itself.
pub fn time_launch_only<T, E>(backend: &dyn Backend, thunk: impl FnOnce() -> Result<T, E>) -> Result<(f64, T), E> {
    backend.synchronize();
    let start = Instant::now();
    let out = thunk()?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    backend.synchronize();
    Ok((ms, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendId;
    use crate::tensor::Tensor;

    #[test]
    fn empty_thunk_is_small_and_nonnegative() {
        for id in BackendId::ALL {
            let (ms, ()) = time_once(id.backend(), || Ok::<_, ()>(())).unwrap();
            assert!((0.0..100.0).contains(&ms));
            let (again, ()) = time_once(id.backend(), || Ok::<_, ()>(())).unwrap();
            assert!(again >= 0.0);
        }
    }

    #[test]
    fn errors_propagate() {
        let r: Result<(f64, ()), &str> = time_once(BackendId::Reference.backend(), || Err("boom"));
        assert_eq!(r.unwrap_err(), "boom");
    }

    #[test]
    fn closing_sync_matters_for_deferred_kernels() {
        let backend = BackendId::Optimized.backend();
        let n = 384;
        let a = Tensor::full([n, n], 0.5).unwrap();
        let run = || backend.matmul(&a, &a);
        let mut synced = Vec::new();
        let mut launched = Vec::new();
        for _ in 0..5 {
            synced.push(time_once(backend, run).unwrap().0);
            let (ms, out): (f64, Tensor) = time_launch_only(backend, run).unwrap();
            assert!(out.is_materialized());
            launched.push(ms);
        }
        synced.sort_by(f64::total_cmp);
        launched.sort_by(f64::total_cmp);
        assert!(launched[2] < synced[2], "launch {launched:?} vs synced {synced:?}");
    }
}
