//! Downlink precoding: RZF for users, target-/user-centric vectors for the
//! sensing beam, power splits, and per-AP transmit assembly.
//!
//! All precoders are designed centrally over the stacked `M_d·N`-dimensional
//! DL channel and sliced per AP; power-split coefficients are common across
//! DL APs, which preserves the direction of the stacked vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sensing_channel, ChannelSet, SymbolBlock};
use crate::error::{Error, Result};
use crate::linalg::{creal, fix_global_phase, CMat, CVec, HermSolver};
use crate::scenario::{ApSplit, Scenario};

/// Which sensing precoder feeds the probing signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingPrecoder {
    /// Dominant right singular vector of the stacked target channel.
    TargetCentric,
    /// Target-centric vector projected onto the nullspace of the DL user
    /// channels; costs echo power, buys zero DL interference.
    UserCentric,
}

/// Unit-norm stacked precoders with their power split.
#[derive(Debug, Clone)]
pub struct PrecoderBank {
    /// Per-DL-user precoders, each `M_d·N` and unit norm.
    pub user: Vec<CVec>,
    /// Sensing precoder, `M_d·N`, unit norm.
    pub sensing: CVec,
    /// Power fraction per DL user.
    pub pi_d: Vec<f64>,
    /// Power fraction for the sensing beam.
    pub pi_s: f64,
    /// RZF regularizer used to build `user`.
    pub epsilon: f64,
    pub num_dl_aps: usize,
    pub antennas: usize,
}

impl PrecoderBank {
    pub fn validate(&self) -> Result<()> {
        for p in self.user.iter().chain(std::iter::once(&self.sensing)) {
            if (p.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("precoders must have unit norm".into()));
            }
            if p.len() != self.num_dl_aps * self.antennas {
                return Err(Error::Config("precoder length must equal M_d·N".into()));
            }
        }
        let total: f64 = self.pi_d.iter().sum::<f64>() + self.pi_s;
        if self.pi_d.iter().any(|&p| p < 0.0) || self.pi_s < 0.0 || total > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "power fractions must be nonnegative with total ≤ 1 (got {total})"
            )));
        }
        Ok(())
    }

    /// AP-`ji` slice (index into the split's DL list) of a stacked vector.
    pub fn ap_slice<'a>(
        &self,
        v: &'a CVec,
        ji: usize,
    ) -> nalgebra::DVectorView<'a, crate::linalg::C64> {
        v.rows(ji * self.antennas, self.antennas)
    }

    /// Per-AP precoding matrix `P_j = [p_{d,j1}, …, p_{d,jK_d}, p_{s,j}]`.
    pub fn p_matrix(&self, ji: usize) -> CMat {
        let n = self.antennas;
        let mut p = CMat::zeros(n, self.user.len() + 1);
        for (col, u) in self.user.iter().enumerate() {
            p.column_mut(col).copy_from(&self.ap_slice(u, ji));
        }
        p.column_mut(self.user.len())
            .copy_from(&self.ap_slice(&self.sensing, ji));
        p
    }

    /// Power-split coefficients `(π_{d,1}, …, π_{d,K_d}, π_s)`.
    pub fn pi_vector(&self) -> Vec<f64> {
        let mut pi = self.pi_d.clone();
        pi.push(self.pi_s);
        pi
    }
}

/// Regularized zero-forcing precoders
/// `p_n ∝ (Σ_{n'} h_{n'} h_{n'}ᴴ + εI)⁻¹ h_n`, normalized.
pub fn rzf_precoder(h_dl: &[CVec], epsilon: f64) -> Result<Vec<CVec>> {
    if h_dl.is_empty() {
        return Err(Error::Config("RZF needs at least one DL user".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::Config(format!(
            "RZF regularizer must be > 0 (got {epsilon})"
        )));
    }
    let dim = h_dl[0].len();
    let mut gram = CMat::identity(dim, dim) * creal(epsilon);
    for h in h_dl {
        gram += h * h.adjoint();
    }
    let solver = HermSolver::new(&gram, "rzf_precoder")?;
    Ok(h_dl
        .iter()
        .map(|h| {
            let mut p = solver.solve_vec(h);
            let norm = p.norm();
            p /= creal(norm);
            p
        })
        .collect())
}

/// Target-centric sensing precoder: dominant right singular vector of the
/// stacked `M_u·N × M_d·N` target channel, phase-fixed for determinism.
pub fn target_centric_precoder(rdot: &[Vec<CMat>]) -> Result<CVec> {
    let m_u = rdot.len();
    if m_u == 0 || rdot[0].is_empty() {
        return Err(Error::Degenerate("empty sensing channel".into()));
    }
    let m_d = rdot[0].len();
    let n = rdot[0][0].nrows();
    let mut stacked = CMat::zeros(m_u * n, m_d * n);
    for (mi, row) in rdot.iter().enumerate() {
        for (ji, blk) in row.iter().enumerate() {
            stacked.view_mut((mi * n, ji * n), (n, n)).copy_from(blk);
        }
    }
    if stacked.norm() == 0.0 {
        return Err(Error::Degenerate(
            "all-zero sensing channel has no dominant direction".into(),
        ));
    }
    let svd = nalgebra::SVD::new(stacked, false, true);
    let v_t = svd.v_t.ok_or_else(|| {
        Error::numerical("target_centric_precoder", "SVD did not converge".to_string())
    })?;
    let mut best = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > svd.singular_values[best] {
            best = i;
        }
    }
    let mut v = v_t.row(best).adjoint();
    fix_global_phase(&mut v);
    Ok(v)
}

/// User-centric sensing precoder: projects the target-centric vector onto
/// the orthogonal complement of the DL users' stacked channels.
pub fn user_centric_precoder(p_trg: &CVec, h_dl: &[CVec]) -> Result<CVec> {
    if h_dl.is_empty() {
        return Ok(p_trg.clone());
    }
    let dim = p_trg.len();
    if dim <= h_dl.len() {
        return Err(Error::Config(format!(
            "nullspace projection needs M_d·N > K_d (got {dim} ≤ {})",
            h_dl.len()
        )));
    }
    let mut basis = CMat::zeros(dim, h_dl.len());
    for (c, h) in h_dl.iter().enumerate() {
        basis.column_mut(c).copy_from(h);
    }
    let q = basis.qr().q();
    let coeffs = q.adjoint() * p_trg;
    let mut p = p_trg - q * coeffs;
    let norm = p.norm();
    if norm < 1e-9 {
        return Err(Error::Degenerate(
            "target direction lies in the DL user span; no user-centric beam exists".into(),
        ));
    }
    p /= creal(norm);
    Ok(p)
}

/// Composite per-AP transmit vectors over an observation window.
#[derive(Debug, Clone)]
pub struct DlTransmit {
    /// `x_{d,j}[τ]`, indexed `[slot][dl_ap_index]`.
    pub x: Vec<Vec<CVec>>,
    /// `‖x_{d,j}[τ]‖²`, same indexing; consumed by the noise covariances.
    pub norm_sq: Vec<Vec<f64>>,
}

impl DlTransmit {
    pub fn slots(&self) -> usize {
        self.x.len()
    }
}

/// Assembles `x_{d,j}[τ] = √p_d (Σ_n √π_n p_{d,jn} s_{d,n}[τ] + √π_s p_{s,j} s_s[τ])`.
pub fn assemble_dl_signal(
    bank: &PrecoderBank,
    symbols: &SymbolBlock,
    dl_power_w: f64,
) -> Result<DlTransmit> {
    bank.validate()?;
    if symbols.s_d.nrows() != bank.user.len() {
        return Err(Error::Config(format!(
            "symbol block carries {} DL streams but bank has {} user precoders",
            symbols.s_d.nrows(),
            bank.user.len()
        )));
    }
    let t = symbols.slots();
    let n = bank.antennas;
    let sqrt_pd = creal(dl_power_w.sqrt());
    let mut x = Vec::with_capacity(t);
    let mut norm_sq = Vec::with_capacity(t);
    for tau in 0..t {
        let mut global = &bank.sensing * (creal(bank.pi_s.sqrt()) * symbols.s_s[tau]);
        for (ni, p) in bank.user.iter().enumerate() {
            global += p * (creal(bank.pi_d[ni].sqrt()) * symbols.s_d[(ni, tau)]);
        }
        global *= sqrt_pd;
        let mut per_ap = Vec::with_capacity(bank.num_dl_aps);
        let mut per_ap_norm = Vec::with_capacity(bank.num_dl_aps);
        for ji in 0..bank.num_dl_aps {
            let slice = global.rows(ji * n, n).into_owned();
            per_ap_norm.push(slice.norm_squared());
            per_ap.push(slice);
        }
        x.push(per_ap);
        norm_sq.push(per_ap_norm);
    }
    Ok(DlTransmit { x, norm_sq })
}

/// Options resolved by the harness before building a bank.
#[derive(Debug, Clone, Copy)]
pub struct PrecodingOptions {
    pub pi_s: f64,
    pub sensing: SensingPrecoder,
    pub epsilon: f64,
}

/// Builds the full bank for a split and channel draw: RZF users with an
/// equal split of `1 − π_s`, plus the selected sensing precoder.
pub fn build_precoder_bank(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    opts: &PrecodingOptions,
) -> Result<PrecoderBank> {
    let n = sc.antennas();
    let k_d = sc.dl_users.len();
    let h_dl: Vec<CVec> = sc
        .dl_users
        .iter()
        .map(|&u| ch.stacked_user_channel(&split.dl_aps, u))
        .collect();
    let user = if k_d == 0 {
        Vec::new()
    } else {
        rzf_precoder(&h_dl, opts.epsilon)?
    };
    let rdot: Vec<Vec<CMat>> = split
        .ul_aps
        .iter()
        .map(|&m| {
            split
                .dl_aps
                .iter()
                .map(|&j| sensing_channel(sc, m, j))
                .collect()
        })
        .collect();
    let p_trg = target_centric_precoder(&rdot)?;
    let sensing = match opts.sensing {
        SensingPrecoder::TargetCentric => p_trg,
        SensingPrecoder::UserCentric => user_centric_precoder(&p_trg, &h_dl)?,
    };
    let pi_d = if k_d == 0 {
        Vec::new()
    } else {
        vec![(1.0 - opts.pi_s) / k_d as f64; k_d]
    };
    let bank = PrecoderBank {
        user,
        sensing,
        pi_d,
        pi_s: opts.pi_s,
        epsilon: opts.epsilon,
        num_dl_aps: split.m_d(),
        antennas: n,
    };
    bank.validate()?;
    Ok(bank)
}

/// Draws a random unit vector; calibration/test helper.
pub fn random_unit(dim: usize, rng: &mut impl Rng) -> CVec {
    let mut v = CVec::from_fn(dim, |_, _| crate::channel::standard_complex(rng));
    let n = v.norm();
    v /= creal(n);
    v
}
