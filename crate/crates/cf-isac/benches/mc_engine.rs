//! Benchmarks the data-parallel trial engine against the sequential
//! fallback on representative per-trial workloads.
//!
//! Run with `cargo bench -p cf-isac`. The two series share identical
//! per-trial substreams, so the outputs (and therefore the work) match
//! exactly; only the scheduling differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cf_isac::channel::{draw_channels, draw_symbols, Constellation};
use cf_isac::detection::{
    build_detection_instance, central_llr, estimate_all_local, estimate_rcs_central, fuse_llrs,
    local_llr, sensing_geometry, simulate_uplink_window, CsiMode,
};
use cf_isac::experiment::engine::{mc_map, mc_map_serial};
use cf_isac::precoding::{
    assemble_dl_signal, build_precoder_bank, PrecodingOptions, SensingPrecoder,
};
use cf_isac::rng::substream;
use cf_isac::scenario::{build_scenario, ApSplit, Scenario, SimConfig};

struct Bed {
    sc: Scenario,
    split: ApSplit,
    opts: PrecodingOptions,
}

fn testbed() -> Bed {
    let config = SimConfig {
        num_aps: 6,
        antennas_per_ap: 4,
        num_users: 8,
        obs_window_slots: 20,
        rng_seed: 3,
        ..SimConfig::default()
    };
    let sc = build_scenario(&config, &mut substream(3, &[0])).unwrap();
    let split = ApSplit {
        ul_aps: vec![0, 1, 2],
        dl_aps: vec![3, 4, 5],
    };
    let opts = PrecodingOptions {
        pi_s: 0.2,
        sensing: SensingPrecoder::TargetCentric,
        epsilon: 4.0 * sc.noise_power_w / sc.dl_power_w(),
    };
    Bed { sc, split, opts }
}

/// One detection trial: channel draw, precoding, simulation, both GLRTs.
fn detection_trial(bed: &Bed, trial: usize) -> (f64, f64) {
    let sc = &bed.sc;
    let geo = sensing_geometry(sc, &bed.split);
    let mut rng = substream(sc.config.rng_seed, &[50, trial as u64]);
    let ch = draw_channels(sc, &mut rng);
    let bank = build_precoder_bank(sc, &bed.split, &ch, &bed.opts).unwrap();
    let symbols = draw_symbols(
        sc.ul_users.len(),
        sc.dl_users.len(),
        sc.config.obs_window_slots,
        Constellation::Gaussian,
        &mut rng,
    );
    let tx = assemble_dl_signal(&bank, &symbols, sc.dl_power_w()).unwrap();
    let obs = simulate_uplink_window(sc, &bed.split, &ch, &geo, &tx, &symbols.s_u, true, &mut rng);
    let inst = build_detection_instance(sc, &bed.split, &ch, &geo, &tx, obs, CsiMode::Perfect);
    let cent = central_llr(&estimate_rcs_central(&inst).unwrap());
    let locals = estimate_all_local(&inst).unwrap();
    let dist = fuse_llrs(&locals.iter().map(local_llr).collect::<Vec<_>>());
    (cent, dist)
}

fn bench_trial_engine(c: &mut Criterion) {
    let bed = testbed();
    let trials = 32usize;

    // The two paths must agree exactly before we time them.
    let a = mc_map(trials, |t| detection_trial(&bed, t));
    let b = mc_map_serial(trials, |t| detection_trial(&bed, t));
    assert_eq!(a, b);

    let mut group = c.benchmark_group("detection_trials");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("parallel", trials), &trials, |bch, &n| {
        bch.iter(|| mc_map(n, |t| detection_trial(&bed, t)))
    });
    group.bench_with_input(BenchmarkId::new("serial", trials), &trials, |bch, &n| {
        bch.iter(|| mc_map_serial(n, |t| detection_trial(&bed, t)))
    });
    group.finish();
}

fn bench_glrt_kernel(c: &mut Criterion) {
    let bed = testbed();
    let sc = &bed.sc;
    let geo = sensing_geometry(sc, &bed.split);
    let mut rng = substream(sc.config.rng_seed, &[51]);
    let ch = draw_channels(sc, &mut rng);
    let bank = build_precoder_bank(sc, &bed.split, &ch, &bed.opts).unwrap();
    let symbols = draw_symbols(
        sc.ul_users.len(),
        sc.dl_users.len(),
        sc.config.obs_window_slots,
        Constellation::Gaussian,
        &mut rng,
    );
    let tx = assemble_dl_signal(&bank, &symbols, sc.dl_power_w()).unwrap();
    let obs = simulate_uplink_window(sc, &bed.split, &ch, &geo, &tx, &symbols.s_u, true, &mut rng);
    let inst = build_detection_instance(sc, &bed.split, &ch, &geo, &tx, obs, CsiMode::Perfect);

    let mut group = c.benchmark_group("glrt_kernel");
    group.bench_function("centralized", |bch| {
        bch.iter(|| central_llr(&estimate_rcs_central(&inst).unwrap()))
    });
    group.bench_function("distributed", |bch| {
        bch.iter(|| {
            let locals = estimate_all_local(&inst).unwrap();
            fuse_llrs(&locals.iter().map(local_llr).collect::<Vec<_>>())
        })
    });
    group.finish();
}

criterion_group!(benches, bench_trial_engine, bench_glrt_kernel);
criterion_main!(benches);
