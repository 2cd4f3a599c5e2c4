//! Per-experiment Monte Carlo drivers.
//!
//! Every runner follows the same pattern: resolve the geometry (fixed from the
//! master seed, or redrawn per trial), fan trials out through
//! [`engine::mc_map`] with counter-derived substreams, and reduce the
//! ordered results into [`Record`]s.

use rand_chacha::ChaCha8Rng;

use super::engine::{self, mean_stderr, percentile, proportion_stderr};
use super::{Detector, FileConfig, Record};
use crate::channel::{draw_channels, draw_symbols, Constellation};
use crate::detection::{
    build_detection_instance, calibrate_threshold, central_llr, detection_probability,
    estimate_all_local, estimate_rcs_central, fuse_llrs, local_llr, mle_rcs, sensing_geometry,
    simulate_uplink_window, CsiMode, DetectionInstance, SensingGeometry,
};
use crate::error::{Error, Result};
use crate::joint::{build_joint_system, detect_symbols, joint_map_estimate, JointMode};
use crate::linalg::{assert_real, stack_vecs, CVec};
use crate::performance::{calibrate_rzf_epsilon, evaluate_se, Duplex};
use crate::precoding::{assemble_dl_signal, build_precoder_bank, DlTransmit, PrecodingOptions};
use crate::rng::{stream, substream};
use crate::scenario::{build_scenario, ApSplit, Scenario};
use crate::scheduling::{
    compute_r_o, exhaustive_schedule, schedule_aps, split_score, ScheduleObjective,
};

const ROLE_H0: u64 = 0;
const ROLE_H1: u64 = 1;

/// Wraps a trial-level failure with the trial index.
fn at_trial<T>(res: Result<T>, trial: usize) -> Result<T> {
    res.map_err(|e| Error::Numerical {
        context: format!("trial {trial}"),
        detail: e.to_string(),
    })
}

/// Geometry, schedule, and precoding options resolved for one sweep point.
struct Context {
    sc: Scenario,
    split: ApSplit,
    geo: SensingGeometry,
    opts: PrecodingOptions,
}

fn resolve_context(cfg: &FileConfig, sc: Scenario, cal_path: &[u64]) -> Result<Context> {
    let r_o = compute_r_o(&sc, sc.config.snr_floor_db)?;
    let split = schedule_aps(&sc, r_o)?.split;
    let geo = sensing_geometry(&sc, &split);
    let epsilon = match cfg.precoding.rzf_epsilon {
        Some(e) => e,
        None => {
            let mut rng = substream(sc.config.rng_seed, cal_path);
            let ch = draw_channels(&sc, &mut rng);
            calibrate_rzf_epsilon(
                &sc,
                &split,
                &ch,
                cfg.precoding.pi_s,
                cfg.precoding.sensing_precoder,
            )?
        }
    };
    let opts = PrecodingOptions {
        pi_s: cfg.precoding.pi_s,
        sensing: cfg.precoding.sensing_precoder,
        epsilon,
    };
    Ok(Context {
        sc,
        split,
        geo,
        opts,
    })
}

/// Fixed-geometry scenario from the master seed.
fn base_scenario(cfg: &FileConfig, kind_id: u64) -> Result<Scenario> {
    let mut rng = substream(cfg.scenario.rng_seed, &[kind_id, stream::SCENARIO]);
    build_scenario(&cfg.scenario, &mut rng)
}

/// Scenario variant with a different RCS variance (dBsm).
fn with_rcs(sc: &Scenario, dbsm: f64) -> Scenario {
    let mut out = sc.clone();
    out.config.rcs_variance_dbsm = dbsm;
    out.sigma_rcs.fill(crate::scenario::db_to_linear(dbsm));
    out
}

/// TDD sensing subframe: UL users stay silent.
fn duplex_effective(sc: &Scenario, duplex: Duplex) -> Scenario {
    match duplex {
        Duplex::Dtdd => sc.clone(),
        Duplex::Tdd { .. } => {
            let mut out = sc.clone();
            out.ul_users.clear();
            out
        }
    }
}

fn sweep2(a: (&str, String), b: (&str, String)) -> Vec<(String, String)> {
    vec![(a.0.to_string(), a.1), (b.0.to_string(), b.1)]
}

/// One detection trial: simulate a window under H0 or H1 and score every
/// requested detector on the same instance.
fn detection_trial(
    ctx: &Context,
    detectors: &[Detector],
    t: usize,
    path: &[u64],
    target_present: bool,
) -> Result<Vec<(Detector, f64)>> {
    let seed = ctx.sc.config.rng_seed;
    let mut path_ch = path.to_vec();
    path_ch.push(stream::CHANNELS);
    let mut path_sym = path.to_vec();
    path_sym.push(stream::SYMBOLS);
    let mut path_noise = path.to_vec();
    path_noise.push(stream::NOISE);

    let ch = draw_channels(&ctx.sc, &mut substream(seed, &path_ch));
    let bank = build_precoder_bank(&ctx.sc, &ctx.split, &ch, &ctx.opts)?;
    let symbols = draw_symbols(
        ctx.sc.ul_users.len(),
        ctx.sc.dl_users.len(),
        t,
        Constellation::Gaussian,
        &mut substream(seed, &path_sym),
    );
    let tx = assemble_dl_signal(&bank, &symbols, ctx.sc.dl_power_w())?;
    let obs = simulate_uplink_window(
        &ctx.sc,
        &ctx.split,
        &ch,
        &ctx.geo,
        &tx,
        &symbols.s_u,
        target_present,
        &mut substream(seed, &path_noise),
    );
    let inst = build_detection_instance(
        &ctx.sc,
        &ctx.split,
        &ch,
        &ctx.geo,
        &tx,
        obs,
        CsiMode::Perfect,
    );
    score_detectors(&inst, detectors)
}

fn score_detectors(
    inst: &DetectionInstance,
    detectors: &[Detector],
) -> Result<Vec<(Detector, f64)>> {
    let mut out = Vec::with_capacity(detectors.len());
    let mut locals = None;
    for &d in detectors {
        let stat = match d {
            Detector::Centralized => central_llr(&estimate_rcs_central(inst)?),
            Detector::Distributed => {
                let l = estimate_all_local(inst)?;
                let s = fuse_llrs(&l.iter().map(local_llr).collect::<Vec<f64>>());
                locals = Some(l);
                s
            }
            Detector::Mle => {
                // Prior-free local estimates, fused like the MAP LLRs.
                let _ = &locals;
                let mut total = 0.0;
                for mi in 0..inst.m_u {
                    let meas = inst.meas_local(mi);
                    let covs: Vec<_> = (0..inst.slots())
                        .map(|tau| inst.local_noise_cov(tau, mi))
                        .collect();
                    let obs: Vec<CVec> =
                        (0..inst.slots()).map(|tau| inst.obs_local(tau, mi)).collect();
                    let gamma = mle_rcs(&meas, &covs, &obs)?;
                    let mut score = CVec::zeros(inst.m_d);
                    for ((r, cov), y) in meas.iter().zip(covs.iter()).zip(obs.iter()) {
                        let solver = crate::linalg::HermSolver::new(cov, "mle score")?;
                        score += r.adjoint() * solver.solve_vec(y);
                    }
                    total += assert_real((score.adjoint() * &gamma)[(0, 0)], "mle llr");
                }
                total
            }
        };
        out.push((d, stat));
    }
    Ok(out)
}

/// Calibrate-then-evaluate for one detector's H0/H1 statistic sets.
fn roc_records(
    sweep_common: &[(String, String)],
    detector: Detector,
    pfa_grid: &[f64],
    h0: &mut Vec<f64>,
    h1: &[f64],
) -> Result<Vec<Record>> {
    h0.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut records = Vec::new();
    for &pfa in pfa_grid {
        let th = calibrate_threshold(h0, pfa)?;
        let pod = detection_probability(h1, th.lambda);
        let mut sweep = sweep_common.to_vec();
        sweep.push(("detector".into(), detector.name().into()));
        sweep.push(("pfa".into(), pfa.to_string()));
        records.push(Record {
            sweep: sweep.clone(),
            metric: "pod".into(),
            value: pod,
            stderr: Some(proportion_stderr(pod, h1.len())),
            trials: h1.len(),
        });
        records.push(Record {
            sweep,
            metric: "threshold".into(),
            value: th.lambda,
            stderr: None,
            trials: h0.len(),
        });
    }
    Ok(records)
}

/// Shared driver for the detector experiments: returns per-detector
/// H0 and H1 statistic vectors.
type HypStats = Vec<(Detector, Vec<f64>, Vec<f64>)>;

fn collect_statistics(
    cfg: &FileConfig,
    ctx: &Context,
    t: usize,
    kind_id: u64,
    sweep_idx: u64,
) -> Result<HypStats> {
    let detectors = &cfg.experiment.detectors;
    let trials = cfg.scenario.mc_trials;
    let run = |role: u64, present: bool| -> Result<Vec<Vec<(Detector, f64)>>> {
        engine::mc_map(trials, |trial| {
            at_trial(
                detection_trial(
                    ctx,
                    detectors,
                    t,
                    &[kind_id, sweep_idx, role, trial as u64],
                    present,
                ),
                trial,
            )
        })
        .into_iter()
        .collect()
    };
    let h0 = run(ROLE_H0, false)?;
    let h1 = run(ROLE_H1, true)?;
    Ok(detectors
        .iter()
        .enumerate()
        .map(|(di, &d)| {
            let pick = |rows: &[Vec<(Detector, f64)>]| rows.iter().map(|r| r[di].1).collect();
            (d, pick(&h0), pick(&h1))
        })
        .collect())
}

pub fn run_roc(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let base = base_scenario(cfg, kind_id)?;
    let rcs_grid = if cfg.experiment.rcs_dbsm_grid.is_empty() {
        vec![cfg.scenario.rcs_variance_dbsm]
    } else {
        cfg.experiment.rcs_dbsm_grid.clone()
    };
    let mut records = Vec::new();
    for (si, &dbsm) in rcs_grid.iter().enumerate() {
        let sc = duplex_effective(&with_rcs(&base, dbsm), cfg.experiment.duplex);
        let ctx = resolve_context(cfg, sc, &[kind_id, si as u64, stream::CALIBRATION])?;
        let stats = collect_statistics(cfg, &ctx, cfg.scenario.obs_window_slots, kind_id, si as u64)?;
        for (d, mut h0, h1) in stats {
            let common = vec![("rcs_dbsm".to_string(), dbsm.to_string())];
            records.extend(roc_records(&common, d, &cfg.experiment.pfa_grid, &mut h0, &h1)?);
        }
    }
    Ok(records)
}

pub fn run_pod_vs_rcs(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let base = base_scenario(cfg, kind_id)?;
    let rcs_grid = if cfg.experiment.rcs_dbsm_grid.is_empty() {
        vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0]
    } else {
        cfg.experiment.rcs_dbsm_grid.clone()
    };
    let pfa = cfg.experiment.pfa;
    let mut records = Vec::new();
    for (si, &dbsm) in rcs_grid.iter().enumerate() {
        let sc = duplex_effective(&with_rcs(&base, dbsm), cfg.experiment.duplex);
        let ctx = resolve_context(cfg, sc, &[kind_id, si as u64, stream::CALIBRATION])?;
        let stats = collect_statistics(cfg, &ctx, cfg.scenario.obs_window_slots, kind_id, si as u64)?;
        for (d, mut h0, h1) in stats {
            h0.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let th = calibrate_threshold(&h0, pfa)?;
            let pod = detection_probability(&h1, th.lambda);
            records.push(Record {
                sweep: sweep2(("rcs_dbsm", dbsm.to_string()), ("detector", d.name().into())),
                metric: "pod".into(),
                value: pod,
                stderr: Some(proportion_stderr(pod, h1.len())),
                trials: h1.len(),
            });
        }
    }
    Ok(records)
}

pub fn run_pod_vs_t(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let base = base_scenario(cfg, kind_id)?;
    let windows = if cfg.experiment.window_grid.is_empty() {
        vec![20, 40, 60, 80, 100, 120]
    } else {
        cfg.experiment.window_grid.clone()
    };
    let pfa = cfg.experiment.pfa;
    let sc = duplex_effective(&base, cfg.experiment.duplex);
    let ctx = resolve_context(cfg, sc, &[kind_id, 0, stream::CALIBRATION])?;
    let mut records = Vec::new();
    for (si, &t) in windows.iter().enumerate() {
        let stats = collect_statistics(cfg, &ctx, t, kind_id, si as u64)?;
        for (d, mut h0, h1) in stats {
            h0.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let th = calibrate_threshold(&h0, pfa)?;
            let pod = detection_probability(&h1, th.lambda);
            records.push(Record {
                sweep: sweep2(("window", t.to_string()), ("detector", d.name().into())),
                metric: "pod".into(),
                value: pod,
                stderr: Some(proportion_stderr(pod, h1.len())),
                trials: h1.len(),
            });
        }
    }
    Ok(records)
}

pub fn run_nmse_vs_rcs(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let base = base_scenario(cfg, kind_id)?;
    let rcs_grid = if cfg.experiment.rcs_dbsm_grid.is_empty() {
        vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
    } else {
        cfg.experiment.rcs_dbsm_grid.clone()
    };
    let trials = cfg.scenario.mc_trials;
    let t = cfg.scenario.obs_window_slots;
    let mut records = Vec::new();
    for (si, &dbsm) in rcs_grid.iter().enumerate() {
        let sc = duplex_effective(&with_rcs(&base, dbsm), cfg.experiment.duplex);
        let ctx = resolve_context(cfg, sc, &[kind_id, si as u64, stream::CALIBRATION])?;

        struct TrialOut {
            err_cent: f64,
            err_dist: f64,
            truth: f64,
            bcrlb_trace: f64,
        }
        let per_trial: Result<Vec<TrialOut>> = engine::mc_map(trials, |trial| {
            at_trial(
                (|| {
                    let path = [kind_id, si as u64, ROLE_H1, trial as u64];
                    let mut path_ch = path.to_vec();
                    path_ch.push(stream::CHANNELS);
                    let mut path_sym = path.to_vec();
                    path_sym.push(stream::SYMBOLS);
                    let mut path_noise = path.to_vec();
                    path_noise.push(stream::NOISE);
                    let seed = ctx.sc.config.rng_seed;
                    let ch = draw_channels(&ctx.sc, &mut substream(seed, &path_ch));
                    let bank = build_precoder_bank(&ctx.sc, &ctx.split, &ch, &ctx.opts)?;
                    let symbols = draw_symbols(
                        ctx.sc.ul_users.len(),
                        ctx.sc.dl_users.len(),
                        t,
                        Constellation::Gaussian,
                        &mut substream(seed, &path_sym),
                    );
                    let tx = assemble_dl_signal(&bank, &symbols, ctx.sc.dl_power_w())?;
                    let obs = simulate_uplink_window(
                        &ctx.sc,
                        &ctx.split,
                        &ch,
                        &ctx.geo,
                        &tx,
                        &symbols.s_u,
                        true,
                        &mut substream(seed, &path_noise),
                    );
                    let inst = build_detection_instance(
                        &ctx.sc,
                        &ctx.split,
                        &ch,
                        &ctx.geo,
                        &tx,
                        obs,
                        CsiMode::Perfect,
                    );
                    let truth_vec = stack_vecs(
                        &ctx.split
                            .ul_aps
                            .iter()
                            .map(|&m| ch.gamma_row(m, &ctx.split))
                            .collect::<Vec<_>>(),
                    );
                    let cent = estimate_rcs_central(&inst)?;
                    let locals = estimate_all_local(&inst)?;
                    let dist = stack_vecs(
                        &locals
                            .iter()
                            .map(|l| l.gamma_hat.clone())
                            .collect::<Vec<_>>(),
                    );
                    let b = crate::detection::bcrlb(&inst)?;
                    let b_inv = crate::linalg::HermSolver::new(&b, "nmse bcrlb")?.inverse();
                    Ok(TrialOut {
                        err_cent: (&cent.gamma_hat - &truth_vec).norm_squared(),
                        err_dist: (&dist - &truth_vec).norm_squared(),
                        truth: truth_vec.norm_squared(),
                        bcrlb_trace: b_inv.trace().re,
                    })
                })(),
                trial,
            )
        })
        .into_iter()
        .collect();
        let per_trial = per_trial?;

        let sum_truth: f64 = per_trial.iter().map(|o| o.truth).sum();
        let prior_trace: f64 = crate::channel::sigma_gamma_diag(&ctx.sc, &ctx.split).sum();
        let mut push = |estimator: &str, errs: Vec<f64>| {
            let (mean_err, se) = mean_stderr(&errs);
            let nmse = mean_err * trials as f64 / sum_truth;
            records.push(Record {
                sweep: sweep2(("rcs_dbsm", dbsm.to_string()), ("estimator", estimator.into())),
                metric: "nmse".into(),
                value: nmse,
                stderr: se.map(|s| s * trials as f64 / sum_truth),
                trials,
            });
        };
        push(
            "centralized",
            per_trial.iter().map(|o| o.err_cent).collect(),
        );
        push(
            "distributed",
            per_trial.iter().map(|o| o.err_dist).collect(),
        );
        // BCRLB as an NMSE floor: tr(B⁻¹)/tr(Σ_γ), averaged over the DL
        // symbol draws that enter B.
        let (mean_b, se_b) = mean_stderr(
            &per_trial
                .iter()
                .map(|o| o.bcrlb_trace / prior_trace)
                .collect::<Vec<_>>(),
        );
        records.push(Record {
            sweep: sweep2(("rcs_dbsm", dbsm.to_string()), ("estimator", "bcrlb".into())),
            metric: "nmse".into(),
            value: mean_b,
            stderr: se_b,
            trials,
        });
    }
    Ok(records)
}

/// Per-draw SE outcomes for the CDF experiments.
struct SeDraw {
    dtdd_sum: f64,
    tdd_sum: f64,
    dtdd_sensing: f64,
    tdd_sensing: f64,
}

fn se_draw(cfg: &FileConfig, kind_id: u64, trial: usize, redraw: bool) -> Result<SeDraw> {
    let seed = cfg.scenario.rng_seed;
    let sc = if redraw {
        build_scenario(
            &cfg.scenario,
            &mut substream(seed, &[kind_id, stream::SCENARIO, trial as u64]),
        )?
    } else {
        base_scenario(cfg, kind_id)?
    };
    let ctx = resolve_context(cfg, sc, &[kind_id, stream::CALIBRATION, trial as u64])?;
    let ch = draw_channels(
        &ctx.sc,
        &mut substream(seed, &[kind_id, stream::CHANNELS, trial as u64]),
    );
    let bank = build_precoder_bank(&ctx.sc, &ctx.split, &ch, &ctx.opts)?;
    let dtdd = evaluate_se(&ctx.sc, &ctx.split, &ch, &ctx.geo, &bank, Duplex::Dtdd)?;
    let ul_fraction = match cfg.experiment.duplex {
        Duplex::Tdd { ul_fraction } => ul_fraction,
        Duplex::Dtdd => 0.5,
    };
    let tdd = evaluate_se(
        &ctx.sc,
        &ctx.split,
        &ch,
        &ctx.geo,
        &bank,
        Duplex::Tdd { ul_fraction },
    )?;
    Ok(SeDraw {
        dtdd_sum: dtdd.sum_se,
        tdd_sum: tdd.sum_se,
        dtdd_sensing: dtdd.sensing_se,
        tdd_sensing: tdd.sensing_se,
    })
}

pub fn run_se_cdf(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let redraw = cfg.experiment.geometry_redraw.unwrap_or(true);
    let trials = cfg.scenario.mc_trials;
    let draws: Result<Vec<SeDraw>> = engine::mc_map(trials, |trial| {
        at_trial(se_draw(cfg, kind_id, trial, redraw), trial)
    })
    .into_iter()
    .collect();
    let draws = draws?;

    let mut records = Vec::new();
    let series: [(&str, Vec<f64>); 4] = [
        ("sum_se_dtdd", draws.iter().map(|d| d.dtdd_sum).collect()),
        ("sum_se_tdd", draws.iter().map(|d| d.tdd_sum).collect()),
        (
            "sensing_se_dtdd",
            draws.iter().map(|d| d.dtdd_sensing).collect(),
        ),
        (
            "sensing_se_tdd",
            draws.iter().map(|d| d.tdd_sensing).collect(),
        ),
    ];
    for (metric, samples) in &series {
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &q in &cfg.experiment.percentiles {
            records.push(Record {
                sweep: vec![("percentile".to_string(), q.to_string())],
                metric: metric.to_string(),
                value: percentile(&sorted, q),
                stderr: None,
                trials,
            });
        }
        let (mean, se) = mean_stderr(samples);
        records.push(Record {
            sweep: vec![("percentile".to_string(), "mean".to_string())],
            metric: metric.to_string(),
            value: mean,
            stderr: se,
            trials,
        });
    }
    // Headline number: DTDD/TDD ratio of the 90%-likely (10th percentile)
    // sum SE.
    let mut dtdd = series[0].1.clone();
    let mut tdd = series[1].1.clone();
    dtdd.sort_by(|a, b| a.partial_cmp(b).unwrap());
    tdd.sort_by(|a, b| a.partial_cmp(b).unwrap());
    records.push(Record {
        sweep: vec![("percentile".to_string(), "10".to_string())],
        metric: "dtdd_tdd_ratio".into(),
        value: percentile(&dtdd, 10.0) / percentile(&tdd, 10.0),
        stderr: None,
        trials,
    });
    Ok(records)
}

pub fn run_ser_vs_power(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let powers = if cfg.experiment.ul_power_dbm_grid.is_empty() {
        vec![10.0, 13.0, 17.0, 20.0, 23.0]
    } else {
        cfg.experiment.ul_power_dbm_grid.clone()
    };
    let trials = cfg.scenario.mc_trials;
    let t = cfg.scenario.obs_window_slots;
    let constellation = cfg.experiment.constellation;
    if constellation.points().is_empty() {
        return Err(Error::Config(
            "ser_vs_power needs a finite constellation".into(),
        ));
    }
    // SER curves average over layouts by default; a fixed hot-spot geometry
    // is one flag away.
    let redraw = cfg.experiment.geometry_redraw.unwrap_or(true);
    let seed = cfg.scenario.rng_seed;

    // trial-major results: per trial, per power point, per scheme.
    struct TrialOut {
        ser_dtdd: Vec<f64>,
        ser_base: Vec<f64>,
    }
    let per_trial: Result<Vec<TrialOut>> = engine::mc_map(trials, |trial| {
        at_trial(
            (|| {
                // Common random numbers across the power sweep: one set of
                // geometry/channel/symbol/noise draws per trial, reused at
                // every power point, keeps the SER curve paired.
                let sc0 = if redraw {
                    build_scenario(
                        &cfg.scenario,
                        &mut substream(seed, &[kind_id, stream::SCENARIO, trial as u64]),
                    )?
                } else {
                    base_scenario(cfg, kind_id)?
                };
                let mut ser_dtdd = Vec::with_capacity(powers.len());
                let mut ser_base = Vec::with_capacity(powers.len());
                for &p_dbm in &powers {
                    let mut sc = sc0.clone();
                    sc.config.ul_power_dbm_per_user = p_dbm;
                    let ctx = resolve_context(
                        cfg,
                        sc,
                        &[kind_id, stream::CALIBRATION, trial as u64],
                    )?;
                    let path = [kind_id, ROLE_H1, trial as u64];
                    let mut path_ch = path.to_vec();
                    path_ch.push(stream::CHANNELS);
                    let mut path_sym = path.to_vec();
                    path_sym.push(stream::SYMBOLS);
                    let mut path_noise = path.to_vec();
                    path_noise.push(stream::NOISE);
                    let ch = draw_channels(&ctx.sc, &mut substream(seed, &path_ch));
                    let bank = build_precoder_bank(&ctx.sc, &ctx.split, &ch, &ctx.opts)?;
                    let symbols = draw_symbols(
                        ctx.sc.ul_users.len(),
                        ctx.sc.dl_users.len(),
                        t,
                        constellation,
                        &mut substream(seed, &path_sym),
                    );
                    let tx = assemble_dl_signal(&bank, &symbols, ctx.sc.dl_power_w())?;
                    let mut noise_rng = substream(seed, &path_noise);

                    // DTDD: full interference, joint estimation.
                    let obs = simulate_uplink_window(
                        &ctx.sc,
                        &ctx.split,
                        &ch,
                        &ctx.geo,
                        &tx,
                        &symbols.s_u,
                        true,
                        &mut noise_rng,
                    );
                    let sys = build_joint_system(
                        &ctx.sc,
                        &ctx.split,
                        &ch,
                        &ctx.geo,
                        &tx,
                        JointMode::Central,
                    )?;
                    let est = joint_map_estimate(&sys, &obs)?;
                    let (_, s_dtdd) = detect_symbols(&est.s_hat, &symbols.s_u, constellation)?;
                    ser_dtdd.push(s_dtdd);

                    // TDD-like baseline: UL-only subframe, DL silent. A
                    // zeroed transmit block removes the echo, the InAI, and
                    // the coupling columns in one stroke.
                    let mut baseline_sc = ctx.sc.clone();
                    baseline_sc.zeta.fill(0.0);
                    baseline_sc.nu.fill(0.0);
                    let zero_tx = DlTransmit {
                        x: vec![vec![CVec::zeros(ctx.sc.antennas()); ctx.split.m_d()]; t],
                        norm_sq: vec![vec![0.0; ctx.split.m_d()]; t],
                    };
                    let obs_base = simulate_uplink_window(
                        &baseline_sc,
                        &ctx.split,
                        &ch,
                        &ctx.geo,
                        &zero_tx,
                        &symbols.s_u,
                        false,
                        &mut noise_rng,
                    );
                    let sys_base = build_joint_system(
                        &baseline_sc,
                        &ctx.split,
                        &ch,
                        &ctx.geo,
                        &zero_tx,
                        JointMode::Central,
                    )?;
                    let est_base = joint_map_estimate(&sys_base, &obs_base)?;
                    let (_, s_base) =
                        detect_symbols(&est_base.s_hat, &symbols.s_u, constellation)?;
                    ser_base.push(s_base);
                }
                Ok(TrialOut { ser_dtdd, ser_base })
            })(),
            trial,
        )
    })
    .into_iter()
    .collect();
    let per_trial = per_trial?;

    let mut records = Vec::new();
    for (pi, &p_dbm) in powers.iter().enumerate() {
        // Errors cluster per draw, so the honest uncertainty is the
        // trial-level standard error of the per-trial SERs.
        let mut push = |scheme: &str, sers: Vec<f64>| {
            let (ser, se) = mean_stderr(&sers);
            records.push(Record {
                sweep: sweep2(("power_dbm", p_dbm.to_string()), ("scheme", scheme.into())),
                metric: "ser".into(),
                value: ser,
                stderr: se,
                trials,
            });
        };
        push(
            "dtdd",
            per_trial.iter().map(|o| o.ser_dtdd[pi]).collect(),
        );
        push(
            "tdd_baseline",
            per_trial.iter().map(|o| o.ser_base[pi]).collect(),
        );
    }
    Ok(records)
}

pub fn run_se_tradeoff(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    let base = base_scenario(cfg, kind_id)?;
    let rcs_grid = if cfg.experiment.rcs_dbsm_grid.is_empty() {
        vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
    } else {
        cfg.experiment.rcs_dbsm_grid.clone()
    };
    let trials = cfg.scenario.mc_trials;
    let mut records = Vec::new();
    for (si, &dbsm) in rcs_grid.iter().enumerate() {
        let sc = with_rcs(&base, dbsm);
        let ctx = resolve_context(cfg, sc, &[kind_id, si as u64, stream::CALIBRATION])?;
        let out: Result<Vec<(f64, f64, f64)>> = engine::mc_map(trials, |trial| {
            at_trial(
                (|| {
                    let seed = ctx.sc.config.rng_seed;
                    let ch = draw_channels(
                        &ctx.sc,
                        &mut substream(seed, &[kind_id, si as u64, stream::CHANNELS, trial as u64]),
                    );
                    let bank = build_precoder_bank(&ctx.sc, &ctx.split, &ch, &ctx.opts)?;
                    let sample =
                        evaluate_se(&ctx.sc, &ctx.split, &ch, &ctx.geo, &bank, cfg.experiment.duplex)?;
                    Ok((sample.sum_se, sample.sensing_se, sample.scnr))
                })(),
                trial,
            )
        })
        .into_iter()
        .collect();
        let out = out?;
        for (metric, samples) in [
            ("comm_se", out.iter().map(|o| o.0).collect::<Vec<_>>()),
            ("sensing_se", out.iter().map(|o| o.1).collect::<Vec<_>>()),
            ("scnr", out.iter().map(|o| o.2).collect::<Vec<_>>()),
        ] {
            let (mean, se) = mean_stderr(&samples);
            records.push(Record {
                sweep: vec![("rcs_dbsm".to_string(), dbsm.to_string())],
                metric: metric.into(),
                value: mean,
                stderr: se,
                trials,
            });
        }
    }
    Ok(records)
}

pub fn run_scheduling_compare(cfg: &FileConfig) -> Result<Vec<Record>> {
    let kind_id = cfg.experiment.kind.stream_id();
    if cfg.scenario.num_aps > 12 {
        return Err(Error::Config(format!(
            "scheduling_compare runs an exhaustive 2^M search; M = {} exceeds the \
             M ≤ 12 guard",
            cfg.scenario.num_aps
        )));
    }
    let redraw = cfg.experiment.geometry_redraw.unwrap_or(true);
    let trials = cfg.scenario.mc_trials;
    let seed = cfg.scenario.rng_seed;

    struct DrawOut {
        algo1: f64,
        random: f64,
        comm_exh: f64,
        target_exh: f64,
    }
    let draws: Result<Vec<DrawOut>> = engine::mc_map(trials, |trial| {
        at_trial(
            (|| {
                let sc = if redraw {
                    build_scenario(
                        &cfg.scenario,
                        &mut substream(seed, &[kind_id, stream::SCENARIO, trial as u64]),
                    )?
                } else {
                    base_scenario(cfg, kind_id)?
                };
                let ctx =
                    resolve_context(cfg, sc, &[kind_id, stream::CALIBRATION, trial as u64])?;
                let ch = draw_channels(
                    &ctx.sc,
                    &mut substream(seed, &[kind_id, stream::CHANNELS, trial as u64]),
                );
                let algo1 = split_score(
                    &ctx.sc,
                    &ch,
                    &ctx.split,
                    ScheduleObjective::CommSe,
                    &ctx.opts,
                );
                let mut mask_rng: ChaCha8Rng =
                    substream(seed, &[kind_id, stream::RCS, trial as u64]);
                let m = ctx.sc.num_aps();
                let mask: u32 = rand::Rng::random_range(&mut mask_rng, 0..(1u32 << m));
                let random_split = ApSplit {
                    ul_aps: (0..m).filter(|&i| mask & (1 << i) != 0).collect(),
                    dl_aps: (0..m).filter(|&i| mask & (1 << i) == 0).collect(),
                };
                let random = split_score(
                    &ctx.sc,
                    &ch,
                    &random_split,
                    ScheduleObjective::CommSe,
                    &ctx.opts,
                );
                let (_, comm_exh) =
                    exhaustive_schedule(&ctx.sc, &ch, ScheduleObjective::CommSe, &ctx.opts)?;
                let (target_split, _) =
                    exhaustive_schedule(&ctx.sc, &ch, ScheduleObjective::SensingSe, &ctx.opts)?;
                let target_exh = split_score(
                    &ctx.sc,
                    &ch,
                    &target_split,
                    ScheduleObjective::CommSe,
                    &ctx.opts,
                );
                Ok(DrawOut {
                    algo1,
                    random,
                    comm_exh,
                    target_exh,
                })
            })(),
            trial,
        )
    })
    .into_iter()
    .collect();
    let draws = draws?;

    let mut records = Vec::new();
    let series: [(&str, Vec<f64>); 4] = [
        ("algorithm1", draws.iter().map(|d| d.algo1).collect()),
        ("random", draws.iter().map(|d| d.random).collect()),
        ("exhaustive_comm", draws.iter().map(|d| d.comm_exh).collect()),
        (
            "exhaustive_target",
            draws.iter().map(|d| d.target_exh).collect(),
        ),
    ];
    for (strategy, samples) in &series {
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &q in &cfg.experiment.percentiles {
            records.push(Record {
                sweep: sweep2(("strategy", strategy.to_string()), ("percentile", q.to_string())),
                metric: "sum_se".into(),
                value: percentile(&sorted, q),
                stderr: None,
                trials,
            });
        }
        let (mean, se) = mean_stderr(samples);
        records.push(Record {
            sweep: sweep2(("strategy", strategy.to_string()), ("percentile", "mean".into())),
            metric: "sum_se".into(),
            value: mean,
            stderr: se,
            trials,
        });
    }
    // Ordering diagnostics used by the acceptance gate.
    let frac = |pred: &dyn Fn(&DrawOut) -> bool| {
        draws.iter().filter(|d| pred(d)).count() as f64 / trials.max(1) as f64
    };
    let tol = 1e-9;
    records.push(Record {
        sweep: sweep2(("strategy", "ordering".into()), ("percentile", "0".into())),
        metric: "frac_comm_exh_ge_algo1".into(),
        value: frac(&|d| d.comm_exh >= d.algo1 - tol * d.algo1.abs()),
        stderr: None,
        trials,
    });
    records.push(Record {
        sweep: sweep2(("strategy", "ordering".into()), ("percentile", "0".into())),
        metric: "frac_algo1_ge_target_exh".into(),
        value: frac(&|d| d.algo1 >= d.target_exh - tol * d.target_exh.abs()),
        stderr: None,
        trials,
    });
    Ok(records)
}
