//! Traffic-based AP mode selection with a target-centric correction, plus
//! exhaustive-search baselines.
//!
//! Each AP counts UL and DL users inside the traffic radius `r_o` and takes
//! the mode with the strictly larger count (ties go DL). The correction
//! then guarantees at least one UL and one DL AP near the target so echoes
//! can be both transmitted and received. The whole pass costs `O(M·K)`
//! distance evaluations.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::detection::sensing_geometry;
use crate::error::{Error, Result};
use crate::linalg::{creal, CMat};
use crate::performance::{evaluate_se, Duplex};
use crate::precoding::{build_precoder_bank, PrecodingOptions};
use crate::scenario::{ApSplit, Scenario};

/// Output of the traffic-based scheduler.
#[derive(Debug, Clone)]
pub struct ScheduleResult {
    pub split: ApSplit,
    /// Traffic-counting radius (m).
    pub r_o: f64,
    /// Target-vicinity radius actually used for the correction counts:
    /// `max(r_o, d₂)` with `d₂` the second-nearest AP-target distance, so
    /// the corrected counts are attainable for any geometry.
    pub r_target: f64,
    /// Per-AP UL/DL user loads `N_{m,u}`, `N_{m,d}`.
    pub load_ul: Vec<usize>,
    pub load_dl: Vec<usize>,
    /// UL/DL APs within `r_target` of the target, after correction.
    pub target_ul_count: usize,
    pub target_dl_count: usize,
    /// Set when `M = 1`: one AP cannot serve both sensing roles, so it
    /// keeps its traffic-based mode.
    pub single_ap_warning: bool,
    /// Distance evaluations spent (`M·K + M`); exposed for the cost test.
    pub distance_evals: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distance at which the received UL SNR crosses `snr_floor_db`, found by
/// bisection on the monotone path-loss model.
pub fn snr_floor_distance(sc: &Scenario, snr_floor_db: f64) -> f64 {
    let required_gain =
        sc.noise_power_w * crate::scenario::db_to_linear(snr_floor_db) / sc.ul_power_w();
    let model = &sc.ap_user_model;
    let (mut lo, mut hi) = (1e-3, 100.0 * sc.config.area_side_m);
    if model.gain(lo) <= required_gain {
        return lo;
    }
    if model.gain(hi) >= required_gain {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.gain(mid) >= required_gain {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Traffic radius `r_o = max(max_k d_{m_k k}, d_SNR)`: every user is within
/// `r_o` of its nearest AP, and the radius never collapses below the SNR
/// floor distance in dense deployments.
pub fn compute_r_o(sc: &Scenario, snr_floor_db: f64) -> Result<f64> {
    if sc.user_positions.is_empty() {
        return Err(Error::Config("r_o needs at least one user".into()));
    }
    let worst_nearest = sc
        .user_positions
        .iter()
        .map(|&u| {
            sc.ap_positions
                .iter()
                .map(|&a| dist(a, u))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(worst_nearest.max(snr_floor_distance(sc, snr_floor_db)))
}

/// Traffic-based AP scheduling with the target-centric correction.
pub fn schedule_aps(sc: &Scenario, r_o: f64) -> Result<ScheduleResult> {
    let m = sc.num_aps();
    if r_o <= 0.0 {
        return Err(Error::Config("r_o must be positive".into()));
    }
    let mut distance_evals = 0usize;

    let mut load_ul = vec![0usize; m];
    let mut load_dl = vec![0usize; m];
    for (mi, &ap) in sc.ap_positions.iter().enumerate() {
        for (k, &u) in sc.user_positions.iter().enumerate() {
            distance_evals += 1;
            if dist(ap, u) <= r_o {
                if sc.ul_users.contains(&k) {
                    load_ul[mi] += 1;
                } else {
                    load_dl[mi] += 1;
                }
            }
        }
    }

    // Mode per AP: UL on a strictly larger UL load, DL otherwise.
    let mut is_ul: Vec<bool> = (0..m).map(|mi| load_ul[mi] > load_dl[mi]).collect();

    let target_dist: Vec<f64> = sc
        .ap_positions
        .iter()
        .map(|&a| {
            distance_evals += 1;
            dist(a, sc.target_position)
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| target_dist[a].partial_cmp(&target_dist[b]).unwrap());

    let mut single_ap_warning = false;
    let r_target = if m >= 2 {
        r_o.max(target_dist[order[1]])
    } else {
        r_o
    };

    if m == 1 {
        single_ap_warning = true;
    } else {
        // Ensure one receiving (UL) then one transmitting (DL) AP near the
        // target. A flip is skipped when it would empty the other mode or
        // strip its last AP near the target; the next-nearest AP serves
        // instead.
        for want_ul in [true, false] {
            let near_count = |is_ul: &[bool], ul: bool| {
                order
                    .iter()
                    .filter(|&&i| is_ul[i] == ul && target_dist[i] <= r_target)
                    .count()
            };
            if near_count(&is_ul, want_ul) > 0 {
                continue;
            }
            for &cand in &order {
                if is_ul[cand] == want_ul {
                    continue;
                }
                let mut trial = is_ul.clone();
                trial[cand] = want_ul;
                let other_total = trial.iter().filter(|&&u| u != want_ul).count();
                if other_total == 0 || near_count(&trial, !want_ul) == 0 {
                    continue;
                }
                is_ul = trial;
                break;
            }
        }
    }

    let split = ApSplit {
        ul_aps: (0..m).filter(|&i| is_ul[i]).collect(),
        dl_aps: (0..m).filter(|&i| !is_ul[i]).collect(),
    };
    let target_ul_count = split
        .ul_aps
        .iter()
        .filter(|&&i| target_dist[i] <= r_target)
        .count();
    let target_dl_count = split
        .dl_aps
        .iter()
        .filter(|&&i| target_dist[i] <= r_target)
        .count();
    Ok(ScheduleResult {
        split,
        r_o,
        r_target,
        load_ul,
        load_dl,
        target_ul_count,
        target_dl_count,
        single_ap_warning,
        distance_evals,
    })
}

/// Objective for the exhaustive baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleObjective {
    CommSe,
    SensingSe,
}

/// Sum-SE score of one split on one channel draw; degenerate splits score
/// what they can actually deliver (no DL APs means no DL/sensing, no UL
/// APs means no UL/sensing).
pub fn split_score(
    sc: &Scenario,
    ch: &ChannelSet,
    split: &ApSplit,
    objective: ScheduleObjective,
    opts: &PrecodingOptions,
) -> f64 {
    let comm_only_ul = |split: &ApSplit| -> f64 {
        let dim = sc.antennas() * split.m_u();
        let sigma_c = CMat::identity(dim, dim) * creal(sc.noise_power_w);
        sc.ul_users
            .iter()
            .map(|&k| {
                crate::performance::ul_sinr(sc, split, ch, &sigma_c, k)
                    .map(|s| (1.0 + s).log2())
                    .unwrap_or(0.0)
            })
            .sum()
    };
    if split.m_d() == 0 {
        return match objective {
            ScheduleObjective::CommSe => comm_only_ul(split),
            ScheduleObjective::SensingSe => 0.0,
        };
    }
    if split.m_u() == 0 {
        match objective {
            ScheduleObjective::SensingSe => return 0.0,
            ScheduleObjective::CommSe => {
                let geo = sensing_geometry(sc, split);
                return match build_precoder_bank(sc, split, ch, opts) {
                    Ok(bank) => sc
                        .dl_users
                        .iter()
                        .map(|&nu| {
                            (1.0 + crate::performance::dl_sinr(sc, split, ch, &bank, nu, true))
                                .log2()
                        })
                        .sum(),
                    Err(_) => {
                        let _ = geo;
                        0.0
                    }
                };
            }
        }
    }
    let geo = sensing_geometry(sc, split);
    let bank = match build_precoder_bank(sc, split, ch, opts) {
        Ok(b) => b,
        Err(_) => return 0.0,
    };
    match evaluate_se(sc, split, ch, &geo, &bank, Duplex::Dtdd) {
        Ok(sample) => match objective {
            ScheduleObjective::CommSe => sample.sum_se,
            ScheduleObjective::SensingSe => sample.sensing_se,
        },
        Err(_) => 0.0,
    }
}

/// Exhaustive search over all `2^M` UL/DL assignments; exponential, so
/// refuse beyond `M = 12`.
pub fn exhaustive_schedule(
    sc: &Scenario,
    ch: &ChannelSet,
    objective: ScheduleObjective,
    opts: &PrecodingOptions,
) -> Result<(ApSplit, f64)> {
    let m = sc.num_aps();
    if m > 12 {
        return Err(Error::Config(format!(
            "exhaustive search over 2^{m} splits is intractable; use schedule_aps \
             or reduce num_aps to ≤ 12"
        )));
    }
    let mut best: Option<(ApSplit, f64)> = None;
    for mask in 0u32..(1u32 << m) {
        let split = ApSplit {
            ul_aps: (0..m).filter(|&i| mask & (1 << i) != 0).collect(),
            dl_aps: (0..m).filter(|&i| mask & (1 << i) == 0).collect(),
        };
        let score = split_score(sc, ch, &split, objective, opts);
        if best.as_ref().map_or(true, |(_, s)| score > *s) {
            best = Some((split, score));
        }
    }
    Ok(best.expect("at least one split evaluated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::precoding::SensingPrecoder;
    use crate::rng::substream;
    use crate::scenario::{build_scenario, SimConfig};
    use proptest::prelude::*;

    fn scenario_with(seed: u64, m: usize, k: usize, ul_frac: f64) -> Scenario {
        let config = SimConfig {
            num_aps: m,
            antennas_per_ap: 2,
            num_users: k,
            ul_user_fraction: ul_frac,
            rng_seed: seed,
            ..SimConfig::default()
        };
        build_scenario(&config, &mut substream(seed, &[0])).unwrap()
    }

    fn default_opts() -> PrecodingOptions {
        PrecodingOptions {
            pi_s: 0.2,
            sensing: SensingPrecoder::TargetCentric,
            epsilon: 1e-12,
        }
    }

    #[test]
    fn r_o_sparse_case_takes_user_distance() {
        let mut sc = scenario_with(110, 1, 1, 1.0);
        sc.ap_positions = vec![[0.0, 0.0]];
        sc.user_positions = vec![[30.0, 0.0]];
        // Force a tiny SNR-floor distance with a huge floor.
        let r = compute_r_o(&sc, 200.0).unwrap();
        assert!((r - 30.0).abs() < 1e-9);
    }

    #[test]
    fn r_o_dense_case_takes_snr_distance() {
        let mut sc = scenario_with(111, 4, 4, 0.5);
        // All users on top of AP 0.
        let ap = sc.ap_positions[0];
        for u in sc.user_positions.iter_mut() {
            *u = [ap[0] + 0.5, ap[1]];
        }
        let r = compute_r_o(&sc, 0.0).unwrap();
        let d_snr = snr_floor_distance(&sc, 0.0);
        assert!((r - d_snr).abs() < 1e-9);
        assert!(d_snr > 1.0);
    }

    #[test]
    fn snr_floor_distance_matches_far_slope_inversion() {
        // Root-solve oracle: on the far slope the crossing distance has the
        // closed form d_km = 10^{−(L + 10·log10(β_req))/35}.
        let sc = scenario_with(112, 4, 4, 0.5);
        let floor_db = 10.0;
        let d = snr_floor_distance(&sc, floor_db);
        let beta_req =
            sc.noise_power_w * crate::scenario::db_to_linear(floor_db) / sc.ul_power_w();
        let d_closed_km =
            10f64.powf(-(sc.ap_user_model.constant_db + 10.0 * beta_req.log10()) / 35.0);
        let d_closed = d_closed_km * 1000.0;
        assert!(d_closed > sc.ap_user_model.d1_m, "oracle assumes far slope");
        assert!((d - d_closed).abs() / d_closed < 1e-6);
    }

    #[test]
    fn all_ul_users_forces_dl_correction() {
        let sc = scenario_with(113, 6, 6, 1.0);
        let r_o = compute_r_o(&sc, 0.0).unwrap();
        let res = schedule_aps(&sc, r_o).unwrap();
        // With only UL demand, a DL AP is either unloaded (0-0 tie) or the
        // single target-corrected flip.
        let flipped: Vec<usize> = res
            .split
            .dl_aps
            .iter()
            .cloned()
            .filter(|&mi| res.load_ul[mi] > res.load_dl[mi])
            .collect();
        assert!(flipped.len() <= 1);
        assert!(res.target_dl_count >= 1);
        assert!(res.target_ul_count >= 1);
    }

    #[test]
    fn all_dl_users_forces_ul_correction() {
        let sc = scenario_with(114, 6, 6, 0.0);
        let r_o = compute_r_o(&sc, 0.0).unwrap();
        let res = schedule_aps(&sc, r_o).unwrap();
        assert_eq!(res.split.m_u(), 1);
        assert!(res.target_ul_count >= 1 && res.target_dl_count >= 1);
    }

    #[test]
    fn tie_goes_downlink() {
        let mut sc = scenario_with(115, 2, 2, 0.5);
        // Symmetric loads: one UL and one DL user, both near both APs.
        sc.ap_positions = vec![[100.0, 100.0], [400.0, 400.0]];
        sc.user_positions = vec![[100.0, 101.0], [101.0, 100.0]];
        sc.ul_users = vec![0];
        sc.dl_users = vec![1];
        let res = schedule_aps(&sc, 5000.0).unwrap();
        for mi in 0..2 {
            assert_eq!(res.load_ul[mi], 1);
            assert_eq!(res.load_dl[mi], 1);
        }
        // Ties put both APs in DL; the UL correction then flips the one
        // nearest the target.
        assert_eq!(res.split.m_u(), 1);
    }

    #[test]
    fn single_ap_warns() {
        let sc = scenario_with(116, 1, 2, 0.5);
        let res = schedule_aps(&sc, compute_r_o(&sc, 0.0).unwrap()).unwrap();
        assert!(res.single_ap_warning);
        assert_eq!(res.split.m_u() + res.split.m_d(), 1);
    }

    #[test]
    fn random_scenarios_satisfy_postconditions() {
        for seed in 0..200u64 {
            let sc = scenario_with(
                200 + seed,
                2 + (seed % 7) as usize,
                1 + (seed % 9) as usize,
                (seed % 11) as f64 / 10.0,
            );
            let r_o = compute_r_o(&sc, 0.0).unwrap();
            let res = schedule_aps(&sc, r_o).unwrap();
            res.split.validate(sc.num_aps()).unwrap();
            if sc.num_aps() >= 2 {
                assert!(res.target_ul_count >= 1, "seed {seed}");
                assert!(res.target_dl_count >= 1, "seed {seed}");
            }
        }
    }

    #[test]
    fn schedule_cost_is_linear_in_m_times_k() {
        for (m, k) in [(3usize, 4usize), (6, 8), (12, 16)] {
            let sc = scenario_with(117, m, k, 0.5);
            let res = schedule_aps(&sc, compute_r_o(&sc, 0.0).unwrap()).unwrap();
            assert_eq!(res.distance_evals, m * k + m);
        }
    }

    #[test]
    fn exhaustive_enumerates_all_splits() {
        let sc = scenario_with(118, 2, 4, 0.5);
        let ch = draw_channels(&sc, &mut substream(118, &[1]));
        let opts = default_opts();
        // Independent enumerator: recursive subset construction.
        fn enumerate(
            m: usize,
            idx: usize,
            current: &mut Vec<bool>,
            out: &mut Vec<Vec<bool>>,
        ) {
            if idx == m {
                out.push(current.clone());
                return;
            }
            for v in [false, true] {
                current.push(v);
                enumerate(m, idx + 1, current, out);
                current.pop();
            }
        }
        let mut masks = Vec::new();
        enumerate(2, 0, &mut Vec::new(), &mut masks);
        assert_eq!(masks.len(), 4);
        let mut best = (None, f64::NEG_INFINITY);
        for mask in &masks {
            let split = ApSplit {
                ul_aps: (0..2).filter(|&i| mask[i]).collect(),
                dl_aps: (0..2).filter(|&i| !mask[i]).collect(),
            };
            let score = split_score(&sc, &ch, &split, ScheduleObjective::CommSe, &opts);
            if score > best.1 {
                best = (Some(split), score);
            }
        }
        let (split, score) = exhaustive_schedule(&sc, &ch, ScheduleObjective::CommSe, &opts)
            .unwrap();
        assert_eq!(split, best.0.unwrap());
        assert!((score - best.1).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_beats_traffic_schedule() {
        let sc = scenario_with(119, 4, 6, 0.5);
        let ch = draw_channels(&sc, &mut substream(119, &[1]));
        let opts = default_opts();
        let (_, best_score) =
            exhaustive_schedule(&sc, &ch, ScheduleObjective::CommSe, &opts).unwrap();
        let res = schedule_aps(&sc, compute_r_o(&sc, 0.0).unwrap()).unwrap();
        let algo_score = split_score(&sc, &ch, &res.split, ScheduleObjective::CommSe, &opts);
        assert!(best_score >= algo_score - 1e-12 * algo_score.abs());
    }

    #[test]
    fn exhaustive_guard() {
        let sc = scenario_with(120, 13, 4, 0.5);
        let ch = draw_channels(&sc, &mut substream(120, &[1]));
        assert!(
            exhaustive_schedule(&sc, &ch, ScheduleObjective::CommSe, &default_opts()).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn partition_always_holds(seed in 0u64..10_000, m in 2usize..10, k in 1usize..12) {
            let sc = scenario_with(seed, m, k, 0.5);
            let res = schedule_aps(&sc, compute_r_o(&sc, 0.0).unwrap()).unwrap();
            prop_assert!(res.split.validate(m).is_ok());
            prop_assert!(res.target_ul_count >= 1);
            prop_assert!(res.target_dl_count >= 1);
        }
    }
}
