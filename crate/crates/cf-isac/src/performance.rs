//! Communication SINR/SE and sensing SCNR/SE evaluation.
//!
//! The UL combiner is the interference-aware MMSE receiver over the stacked
//! UL APs; DL users get the RZF beams, the target its sensing beam. TDD is
//! the same engine with the cross-link couplings switched off per subframe
//! and both prelogs scaled by the frame split.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::detection::SensingGeometry;
use crate::error::Result;
use crate::linalg::{creal, CMat, CVec, HermSolver};
use crate::precoding::{build_precoder_bank, PrecoderBank, PrecodingOptions};
use crate::scenario::{ApSplit, Scenario};

/// Duplexing mode for SE evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Duplex {
    /// UL and DL share the whole coherence block (prelog 1 each).
    Dtdd,
    /// Orthogonal subframes; `ul_fraction` of the block carries UL.
    Tdd { ul_fraction: f64 },
}

/// Prelog factors applied to the SE terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prelog {
    pub ul: f64,
    pub dl: f64,
    pub sensing: f64,
}

impl Duplex {
    pub fn prelog(&self) -> Prelog {
        match *self {
            Duplex::Dtdd => Prelog {
                ul: 1.0,
                dl: 1.0,
                sensing: 1.0,
            },
            // Sensing rides the DL subframe.
            Duplex::Tdd { ul_fraction } => Prelog {
                ul: ul_fraction,
                dl: 1.0 - ul_fraction,
                sensing: 1.0 - ul_fraction,
            },
        }
    }
}

/// One SE evaluation on a single channel draw.
#[derive(Debug, Clone)]
pub struct SeSample {
    pub sinr_ul: Vec<f64>,
    pub sinr_dl: Vec<f64>,
    /// Sum UL+DL spectral efficiency (bits/s/Hz), prelogs applied.
    pub sum_se: f64,
    /// Sensing SCNR (linear).
    pub scnr: f64,
    /// Sensing SE (bits/s/Hz), prelog applied.
    pub sensing_se: f64,
    pub prelog: Prelog,
}

/// UL-side interference-plus-noise covariance `Σ_c` at dimension `N·M_u`:
/// target-reflected interference, residual InAI/clutter, and AWGN.
pub fn ul_comm_noise_cov(
    sc: &Scenario,
    split: &ApSplit,
    geo: &SensingGeometry,
    bank: &PrecoderBank,
) -> CMat {
    let n = sc.antennas();
    let m_u = split.m_u();
    let p_d = sc.dl_power_w();
    let mut cov = CMat::identity(n * m_u, n * m_u) * creal(sc.noise_power_w);

    // Per-AP beam Gram matrices P_j Π P_jᴴ and radiated powers b_j.
    let pi = bank.pi_vector();
    let mut beam_gram = Vec::with_capacity(split.m_d());
    let mut b = Vec::with_capacity(split.m_d());
    for ji in 0..split.m_d() {
        let p = bank.p_matrix(ji);
        let mut gram = CMat::zeros(n, n);
        let mut bj = 0.0;
        for (ci, &pi_c) in pi.iter().enumerate() {
            let col = p.column(ci);
            gram += col * col.adjoint() * creal(pi_c);
            bj += pi_c * col.norm_squared();
        }
        beam_gram.push(gram);
        b.push(p_d * bj);
    }

    for (mi, &m) in split.ul_aps.iter().enumerate() {
        let mut block = CMat::zeros(n, n);
        for (ji, &j) in split.dl_aps.iter().enumerate() {
            // TRI: p_d σ_mj Ṙ_mj (P Π Pᴴ) Ṙ_mjᴴ.
            let r = &geo.rdot[mi][ji];
            block += r * &beam_gram[ji] * r.adjoint() * creal(p_d * sc.sigma_rcs[(m, j)]);
            // Residual InAI and clutter, flat over antennas.
            let lvl = (sc.zeta[(m, j)] + sc.nu[(m, j)]) * b[ji];
            for i in 0..n {
                block[(i, i)] += creal(lvl);
            }
        }
        let mut view = cov.view_mut((mi * n, mi * n), (n, n));
        view += block;
    }
    cov
}

/// MMSE-combiner SINR of UL user `k` (global user index):
/// `E_k h_kᴴ (Σ_{k'≠k} E_{k'} h_{k'}h_{k'}ᴴ + Σ_c)⁻¹ h_k`.
pub fn ul_sinr(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    sigma_c: &CMat,
    k: usize,
) -> Result<f64> {
    let e_u = sc.ul_power_w();
    let mut r = sigma_c.clone();
    for &k2 in &sc.ul_users {
        if k2 == k {
            continue;
        }
        let h = ch.stacked_user_channel(&split.ul_aps, k2);
        r += &h * h.adjoint() * creal(e_u);
    }
    let h = ch.stacked_user_channel(&split.ul_aps, k);
    let solver = HermSolver::new(&r, "ul_sinr")?;
    let sinr = (h.adjoint() * solver.solve_vec(&h))[(0, 0)];
    Ok(crate::linalg::assert_real(sinr, "ul_sinr") * e_u)
}

/// DL SINR of user `n` (global user index, must be a DL user): RZF beam
/// gain over multi-user, sensing, inter-user, and thermal terms.
///
/// `include_inui = false` models the TDD DL subframe where no UL user
/// transmits.
pub fn dl_sinr(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    bank: &PrecoderBank,
    n_user: usize,
    include_inui: bool,
) -> f64 {
    let p_d = sc.dl_power_w();
    let h = ch.stacked_user_channel(&split.dl_aps, n_user);
    let ni = sc
        .dl_users
        .iter()
        .position(|&u| u == n_user)
        .expect("dl_sinr called for a non-DL user");

    let gain = |p: &CVec| (h.adjoint() * p)[(0, 0)].norm_sqr();
    let signal = bank.pi_d[ni] * p_d * gain(&bank.user[ni]);
    let mut denom = sc.noise_power_w;
    for (n2, p) in bank.user.iter().enumerate() {
        if n2 != ni {
            denom += bank.pi_d[n2] * p_d * gain(p);
        }
    }
    denom += bank.pi_s * p_d * gain(&bank.sensing);
    if include_inui {
        for &k in &sc.ul_users {
            denom += sc.ul_power_w() * sc.kappa[(n_user, k)];
        }
    }
    signal / denom
}

/// Closed-form sensing SCNR: average echo power over UL-user, thermal, and
/// InAI/clutter power at the UL APs.
///
/// `include_ul_users = false` gives the TDD variant where the sensing
/// subframe carries no UL traffic.
pub fn sensing_scnr(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    geo: &SensingGeometry,
    bank: &PrecoderBank,
    include_ul_users: bool,
) -> f64 {
    let n = sc.antennas();
    let p_d = sc.dl_power_w();
    let pi = bank.pi_vector();

    let mut num = 0.0;
    let mut inai = 0.0;
    for (ji, &j) in split.dl_aps.iter().enumerate() {
        let p = bank.p_matrix(ji);
        let mut bj = 0.0;
        for (ci, &pi_c) in pi.iter().enumerate() {
            bj += pi_c * p.column(ci).norm_squared();
        }
        for (mi, &m) in split.ul_aps.iter().enumerate() {
            let r = &geo.rdot[mi][ji];
            let mut echo = 0.0;
            for (ci, &pi_c) in pi.iter().enumerate() {
                echo += pi_c * (r * p.column(ci)).norm_squared();
            }
            num += sc.sigma_rcs[(m, j)] * echo;
            inai += (sc.zeta[(m, j)] + sc.nu[(m, j)]) * p_d * bj;
        }
    }
    num *= p_d;

    let mut den = sc.noise_power_w * (n * split.m_u()) as f64;
    den += n as f64 * inai;
    if include_ul_users {
        for &k in &sc.ul_users {
            for &m in &split.ul_aps {
                den += sc.ul_power_w() * ch.h_user(m, k).norm_squared();
            }
        }
    }
    num / den
}

/// Sum UL-DL SE with prelogs applied.
pub fn sum_se(sinr_ul: &[f64], sinr_dl: &[f64], prelog: &Prelog) -> f64 {
    let ul: f64 = sinr_ul.iter().map(|s| (1.0 + s).log2()).sum();
    let dl: f64 = sinr_dl.iter().map(|s| (1.0 + s).log2()).sum();
    prelog.ul * ul + prelog.dl * dl
}

/// Sensing SE with its prelog.
pub fn sensing_se(scnr: f64, prelog: &Prelog) -> f64 {
    prelog.sensing * (1.0 + scnr).log2()
}

/// Full SE evaluation of one channel draw under a duplex mode.
pub fn evaluate_se(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    geo: &SensingGeometry,
    bank: &PrecoderBank,
    duplex: Duplex,
) -> Result<SeSample> {
    let prelog = duplex.prelog();
    let dtdd = matches!(duplex, Duplex::Dtdd);

    let sigma_c = if dtdd {
        ul_comm_noise_cov(sc, split, geo, bank)
    } else {
        // TDD UL subframe: DL silent, so only thermal noise remains.
        CMat::identity(sc.antennas() * split.m_u(), sc.antennas() * split.m_u())
            * creal(sc.noise_power_w)
    };
    let mut sinr_ul = Vec::with_capacity(sc.ul_users.len());
    for &k in &sc.ul_users {
        sinr_ul.push(ul_sinr(sc, split, ch, &sigma_c, k)?);
    }
    let sinr_dl: Vec<f64> = sc
        .dl_users
        .iter()
        .map(|&nu| dl_sinr(sc, split, ch, bank, nu, dtdd))
        .collect();
    let scnr = sensing_scnr(sc, split, ch, geo, bank, dtdd);
    Ok(SeSample {
        sum_se: sum_se(&sinr_ul, &sinr_dl, &prelog),
        sensing_se: sensing_se(scnr, &prelog),
        sinr_ul,
        sinr_dl,
        scnr,
        prelog,
    })
}

/// Coarse grid search for the RZF regularizer: maximizes sum DL SE on a
/// calibration draw over `{10⁻³…10¹}·(K_d·Ñ/p_d)`.
pub fn calibrate_rzf_epsilon(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    pi_s: f64,
    sensing: crate::precoding::SensingPrecoder,
) -> Result<f64> {
    let k_d = sc.dl_users.len();
    let base = (k_d.max(1) as f64) * sc.noise_power_w / sc.dl_power_w();
    if k_d == 0 {
        return Ok(base);
    }
    let mut best = (f64::NEG_INFINITY, base);
    for exp in -3..=1 {
        let eps = base * 10f64.powi(exp);
        let opts = PrecodingOptions {
            pi_s,
            sensing,
            epsilon: eps,
        };
        let bank = match build_precoder_bank(sc, split, ch, &opts) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let dl_se: f64 = sc
            .dl_users
            .iter()
            .map(|&nu| (1.0 + dl_sinr(sc, split, ch, &bank, nu, true)).log2())
            .sum();
        if dl_se > best.0 {
            best = (dl_se, eps);
        }
    }
    Ok(best.1)
}
