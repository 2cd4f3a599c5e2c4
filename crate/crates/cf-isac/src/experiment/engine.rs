//! Monte Carlo execution engine.
//!
//! Trials are embarrassingly parallel: each gets a counter-derived RNG
//! substream, results are collected in trial order, and every reduction
//! runs serially over that ordered vector. Aggregates are therefore
//! bit-identical between the rayon path and the sequential fallback.

/// Runs `f` for every trial index, optionally in parallel.
#[cfg(feature = "parallel")]
pub fn mc_map<T: Send, F: Fn(usize) -> T + Sync + Send>(trials: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

/// Runs `f` for every trial index, optionally in parallel.
#[cfg(not(feature = "parallel"))]
pub fn mc_map<T: Send, F: Fn(usize) -> T + Sync + Send>(trials: usize, f: F) -> Vec<T> {
    mc_map_serial(trials, f)
}

/// Sequential reference path; always available for determinism checks and
/// benchmarks.
pub fn mc_map_serial<T: Send, F: Fn(usize) -> T + Sync + Send>(trials: usize, f: F) -> Vec<T> {
    (0..trials).map(f).collect()
}

/// Pins the rayon worker count. A `None` leaves the default; calling twice
/// is a no-op (the first pool wins). Without the `parallel` feature this
/// only records intent.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Mean and standard error of the mean; `stderr` is `None` for a single
/// sample.
pub fn mean_stderr(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some((var / n as f64).sqrt()))
}

/// Standard error of an empirical proportion.
pub fn proportion_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p.max(0.0).min(1.0) * (1.0 - p.max(0.0).min(1.0)) / n as f64).sqrt()
}

/// Nearest-rank percentile of a sorted sample (`q` in percent).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree() {
        let f = |i: usize| {
            let mut rng = crate::rng::substream(9, &[i as u64]);
            rand::Rng::random::<f64>(&mut rng)
        };
        let a = mc_map(64, f);
        let b = mc_map_serial(64, f);
        assert_eq!(a, b);
    }

    #[test]
    fn mean_and_stderr() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        let want = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((se.unwrap() - want).abs() < 1e-12);
        assert!(mean_stderr(&[7.0]).1.is_none());
    }

    #[test]
    fn percentile_nearest_rank() {
        let s = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&s, 10.0), 1.0);
        assert_eq!(percentile(&s, 50.0), 5.0);
        assert_eq!(percentile(&s, 100.0), 10.0);
    }
}
