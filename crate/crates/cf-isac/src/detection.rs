//! Target detection: sensing-noise covariances, centralized and distributed
//! MAP RCS estimators with their GLRT statistics, the prior-free MLE, the
//! exact centralized-vs-distributed decomposition, BCRLB benchmarking, and
//! empirical threshold calibration.
//!
//! Conventions: UL APs are indexed by their position `mi` in
//! `split.ul_aps`, DL APs by `ji` in `split.dl_aps`. Stacked quantities are
//! receiver-major: the global observation is `(r_1ᵀ, …, r_{M_u}ᵀ)ᵀ` and the
//! RCS vector is `(γ_1ᵀ, …, γ_{M_u}ᵀ)ᵀ` with `γ_m ∈ C^{M_d}`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sensing_channel, standard_complex, ChannelSet};
use crate::error::{Error, Result};
use crate::linalg::{
    assert_real, block_diag, creal, stack_vecs, CMat, CVec, HermSolver,
};
use crate::precoding::DlTransmit;
use crate::scenario::{ApSplit, Scenario};

/// CSI assumption for the user term of the sensing-noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiMode {
    /// Instantaneous `h_mk` known: user term is `Σ_k E_k h_k h_kᴴ`.
    Perfect,
    /// Only large-scale statistics known: user term is `Σ_k E_k β_mk I_N`,
    /// which makes the global covariance exactly block diagonal.
    Statistical,
}

/// Deterministic sensing channels `Ṙ_mj` for one AP split, `[mi][ji]`.
#[derive(Debug, Clone)]
pub struct SensingGeometry {
    pub rdot: Vec<Vec<CMat>>,
}

pub fn sensing_geometry(sc: &Scenario, split: &ApSplit) -> SensingGeometry {
    let rdot = split
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
    SensingGeometry { rdot }
}

/// Per-slot measurement matrices
/// `R̈_m[τ] = [Ṙ_m1 x_{d,1}[τ], …, Ṙ_mM_d x_{d,M_d}[τ]]`, indexed `[τ][mi]`.
pub fn measurement_matrices(geo: &SensingGeometry, tx: &DlTransmit) -> Vec<Vec<CMat>> {
    let m_u = geo.rdot.len();
    let m_d = geo.rdot.first().map_or(0, |r| r.len());
    (0..tx.slots())
        .map(|tau| {
            (0..m_u)
                .map(|mi| {
                    let n = geo.rdot[mi][0].nrows();
                    let mut r = CMat::zeros(n, m_d);
                    for ji in 0..m_d {
                        r.column_mut(ji)
                            .copy_from(&(&geo.rdot[mi][ji] * &tx.x[tau][ji]));
                    }
                    r
                })
                .collect()
        })
        .collect()
}

/// Everything the detectors need for one observation window.
///
/// Covariances are represented structurally: the user Gram matrix
/// `U = Σ_k E_k h_k h_kᴴ` is slot-independent, while the ambient part
/// `A_m[τ] = (Σ_j (ζ_mj + ν_mj)‖x_j[τ]‖² + Ñ)·I_N` reduces to one scalar
/// per AP and slot. `Σ_{s,m}[τ]` and `Σ_s[τ]` are materialized on demand.
#[derive(Debug, Clone)]
pub struct DetectionInstance {
    /// `R̈_m[τ]`, indexed `[τ][mi]`.
    pub meas: Vec<Vec<CMat>>,
    /// Global user Gram matrix, `N·M_u × N·M_u` (zero when `K_u = 0`).
    pub user_gram: CMat,
    /// Ambient noise scalar per `[τ][mi]`.
    pub ambient: Vec<Vec<f64>>,
    /// Stacked observations `r_u[τ] ∈ C^{N·M_u}`, indexed `[τ]`.
    pub obs: Vec<CVec>,
    /// Diagonal of `Σ_γ`, receiver-major, length `M_u·M_d`.
    pub sigma_gamma: DVector<f64>,
    pub n: usize,
    pub m_u: usize,
    pub m_d: usize,
}

impl DetectionInstance {
    pub fn slots(&self) -> usize {
        self.obs.len()
    }

    /// Observation slice of UL AP `mi` at slot `tau`.
    pub fn obs_local(&self, tau: usize, mi: usize) -> CVec {
        self.obs[tau].rows(mi * self.n, self.n).into_owned()
    }

    /// `Σ_{s,m}[τ] = [U]_mm + a_m[τ]·I_N`.
    pub fn local_noise_cov(&self, tau: usize, mi: usize) -> CMat {
        let n = self.n;
        let mut cov = self
            .user_gram
            .view((mi * n, mi * n), (n, n))
            .into_owned();
        let a = creal(self.ambient[tau][mi]);
        for i in 0..n {
            cov[(i, i)] += a;
        }
        cov
    }

    /// `Σ_s[τ] = U + blkdiag(a_m[τ]·I_N)`.
    pub fn global_noise_cov(&self, tau: usize) -> CMat {
        let n = self.n;
        let mut cov = self.user_gram.clone();
        for mi in 0..self.m_u {
            let a = creal(self.ambient[tau][mi]);
            for i in 0..n {
                cov[(mi * n + i, mi * n + i)] += a;
            }
        }
        cov
    }

    /// Block-diagonalized covariance `Σ_s^D[τ] = blkdiag(Σ_{s,m}[τ])`.
    pub fn block_diag_noise_cov(&self, tau: usize) -> CMat {
        let blocks: Vec<CMat> = (0..self.m_u)
            .map(|mi| self.local_noise_cov(tau, mi))
            .collect();
        block_diag(&blocks)
    }

    /// Global measurement matrix `R̈[τ] = blkdiag(R̈_m[τ])`.
    pub fn global_meas(&self, tau: usize) -> CMat {
        block_diag(&self.meas[tau])
    }

    /// `Σ_γ` diagonal slice for UL AP `mi`.
    pub fn sigma_gamma_local(&self, mi: usize) -> DVector<f64> {
        self.sigma_gamma.rows(mi * self.m_d, self.m_d).into_owned()
    }

    /// Measurement blocks of AP `mi` across the window.
    pub fn meas_local(&self, mi: usize) -> Vec<CMat> {
        self.meas.iter().map(|per_ap| per_ap[mi].clone()).collect()
    }
}

/// Ambient (InAI + clutter + AWGN) noise scalar
/// `a_m[τ] = Σ_j (ζ_mj + ν_mj)·‖x_j[τ]‖² + Ñ` for global AP index `m`.
pub fn ambient_noise_scalar(
    sc: &Scenario,
    split: &ApSplit,
    m_global: usize,
    xnorm_sq: &[f64],
) -> f64 {
    let mut a = sc.noise_power_w;
    for (ji, &j) in split.dl_aps.iter().enumerate() {
        a += (sc.zeta[(m_global, j)] + sc.nu[(m_global, j)]) * xnorm_sq[ji];
    }
    a
}

/// Global user Gram matrix `Σ_k E_k h_k h_kᴴ` over the UL APs of `split`
/// (or its statistical-CSI surrogate `Σ_k E_k β_mk I_N` per block).
pub fn user_gram_matrix(sc: &Scenario, split: &ApSplit, ch: &ChannelSet, csi: CsiMode) -> CMat {
    let n = sc.antennas();
    let dim = n * split.m_u();
    let e_u = sc.ul_power_w();
    let mut gram = CMat::zeros(dim, dim);
    match csi {
        CsiMode::Perfect => {
            for &k in &sc.ul_users {
                let h = ch.stacked_user_channel(&split.ul_aps, k);
                gram += &h * h.adjoint() * creal(e_u);
            }
        }
        CsiMode::Statistical => {
            for (mi, &m) in split.ul_aps.iter().enumerate() {
                for &k in &sc.ul_users {
                    let b = creal(e_u * sc.beta[(m, k)]);
                    for i in 0..n {
                        gram[(mi * n + i, mi * n + i)] += b;
                    }
                }
            }
        }
    }
    gram
}

/// Local sensing-noise covariance `Σ_{s,m}[τ]` for UL AP index `mi`.
pub fn local_noise_cov(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    mi: usize,
    xnorm_sq: &[f64],
    csi: CsiMode,
) -> CMat {
    let n = sc.antennas();
    let m = split.ul_aps[mi];
    let mut cov = CMat::identity(n, n) * creal(ambient_noise_scalar(sc, split, m, xnorm_sq));
    let e_u = sc.ul_power_w();
    for &k in &sc.ul_users {
        match csi {
            CsiMode::Perfect => {
                let h = ch.h_user(m, k);
                cov += &h * h.adjoint() * creal(e_u);
            }
            CsiMode::Statistical => {
                let b = creal(e_u * sc.beta[(m, k)]);
                for i in 0..n {
                    cov[(i, i)] += b;
                }
            }
        }
    }
    cov
}

/// Global sensing-noise covariance `Σ_s[τ]` at dimension `N·M_u`.
pub fn global_noise_cov(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    xnorm_sq: &[f64],
    csi: CsiMode,
) -> CMat {
    let n = sc.antennas();
    let mut cov = user_gram_matrix(sc, split, ch, csi);
    for (mi, &m) in split.ul_aps.iter().enumerate() {
        let a = creal(ambient_noise_scalar(sc, split, m, xnorm_sq));
        for i in 0..n {
            cov[(mi * n + i, mi * n + i)] += a;
        }
    }
    cov
}

/// Simulates the UL receive window: user signals, target echo (under H1),
/// and equivalent ambient noise drawn at its exact per-slot variance.
pub fn simulate_uplink_window(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    geo: &SensingGeometry,
    tx: &DlTransmit,
    s_u: &CMat,
    target_present: bool,
    rng: &mut impl Rng,
) -> Vec<CVec> {
    let n = sc.antennas();
    let m_u = split.m_u();
    let e_u_sqrt = creal(sc.ul_power_w().sqrt());
    let mut window = Vec::with_capacity(tx.slots());
    for tau in 0..tx.slots() {
        let mut r = CVec::zeros(n * m_u);
        for (ki, &k) in sc.ul_users.iter().enumerate() {
            let h = ch.stacked_user_channel(&split.ul_aps, k);
            r += h * (e_u_sqrt * s_u[(ki, tau)]);
        }
        if target_present {
            for (mi, &m) in split.ul_aps.iter().enumerate() {
                for (ji, &j) in split.dl_aps.iter().enumerate() {
                    let echo = &geo.rdot[mi][ji] * &tx.x[tau][ji] * ch.gamma[(m, j)];
                    let mut seg = r.rows_mut(mi * n, n);
                    seg += echo;
                }
            }
        }
        for (mi, &m) in split.ul_aps.iter().enumerate() {
            let std = ambient_noise_scalar(sc, split, m, &tx.norm_sq[tau]).sqrt();
            let mut seg = r.rows_mut(mi * n, n);
            for i in 0..n {
                seg[i] += standard_complex(rng) * std;
            }
        }
        window.push(r);
    }
    window
}

/// Bundles measurements, covariance structure, and observations for one
/// window.
pub fn build_detection_instance(
    sc: &Scenario,
    split: &ApSplit,
    ch: &ChannelSet,
    geo: &SensingGeometry,
    tx: &DlTransmit,
    obs: Vec<CVec>,
    csi: CsiMode,
) -> DetectionInstance {
    let meas = measurement_matrices(geo, tx);
    let ambient = (0..tx.slots())
        .map(|tau| {
            split
                .ul_aps
                .iter()
                .map(|&m| ambient_noise_scalar(sc, split, m, &tx.norm_sq[tau]))
                .collect()
        })
        .collect();
    DetectionInstance {
        meas,
        user_gram: user_gram_matrix(sc, split, ch, csi),
        ambient,
        obs,
        sigma_gamma: crate::channel::sigma_gamma_diag(sc, split),
        n: sc.antennas(),
        m_u: split.m_u(),
        m_d: split.m_d(),
    }
}

/// MAP RCS estimate with its posterior covariance and matched-filter score.
#[derive(Debug, Clone)]
pub struct RcsEstimate {
    /// `γ̂ = Υ·score`.
    pub gamma_hat: CVec,
    /// Posterior covariance `Υ = (Σ_τ R̈ᴴΣ⁻¹R̈ + Σ_γ⁻¹)⁻¹`.
    pub upsilon: CMat,
    /// Whitened matched-filter score `Σ_τ R̈ᴴ[τ]Σ⁻¹[τ]r[τ]`.
    pub score: CVec,
}

fn map_estimate(
    meas: &[CMat],
    covs: &[CMat],
    obs: &[CVec],
    sigma_gamma: &DVector<f64>,
    context: &str,
) -> Result<RcsEstimate> {
    if meas.is_empty() {
        return Err(Error::Config(format!(
            "{context}: estimation needs at least one slot"
        )));
    }
    let dim = meas[0].ncols();
    let mut precision = CMat::zeros(dim, dim);
    for (i, &s) in sigma_gamma.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::Config(format!(
                "{context}: Σ_γ must be positive definite (σ[{i}] = {s})"
            )));
        }
        precision[(i, i)] = creal(1.0 / s);
    }
    let mut score = CVec::zeros(dim);
    for ((r, cov), y) in meas.iter().zip(covs.iter()).zip(obs.iter()) {
        let solver = HermSolver::new(cov, context)?;
        precision += r.adjoint() * solver.solve_mat(r);
        score += r.adjoint() * solver.solve_vec(y);
    }
    let post = HermSolver::new(&precision, context)?;
    let upsilon = post.inverse();
    let gamma_hat = post.solve_vec(&score);
    Ok(RcsEstimate {
        gamma_hat,
        upsilon,
        score,
    })
}

/// Per-AP MAP estimate of `γ_m` (distributed scheme).
pub fn estimate_rcs_local(
    meas: &[CMat],
    covs: &[CMat],
    obs: &[CVec],
    sigma_gamma: &DVector<f64>,
) -> Result<RcsEstimate> {
    map_estimate(meas, covs, obs, sigma_gamma, "estimate_rcs_local")
}

/// MAP estimate of the stacked `γ` at the CPU (centralized scheme).
pub fn estimate_rcs_central(inst: &DetectionInstance) -> Result<RcsEstimate> {
    let t = inst.slots();
    let meas: Vec<CMat> = (0..t).map(|tau| inst.global_meas(tau)).collect();
    let covs: Vec<CMat> = (0..t).map(|tau| inst.global_noise_cov(tau)).collect();
    map_estimate(
        &meas,
        &covs,
        &inst.obs,
        &inst.sigma_gamma,
        "estimate_rcs_central",
    )
}

/// Convenience: local estimates for every UL AP of an instance.
pub fn estimate_all_local(inst: &DetectionInstance) -> Result<Vec<RcsEstimate>> {
    (0..inst.m_u)
        .map(|mi| {
            let meas = inst.meas_local(mi);
            let covs: Vec<CMat> = (0..inst.slots())
                .map(|tau| inst.local_noise_cov(tau, mi))
                .collect();
            let obs: Vec<CVec> = (0..inst.slots()).map(|tau| inst.obs_local(tau, mi)).collect();
            estimate_rcs_local(&meas, &covs, &obs, &inst.sigma_gamma_local(mi))
        })
        .collect()
}

/// GLRT statistic `T = Re(scoreᴴ γ̂)`; real in exact arithmetic.
pub fn glrt_statistic(est: &RcsEstimate) -> f64 {
    assert_real((est.score.adjoint() * &est.gamma_hat)[(0, 0)], "glrt_statistic")
}

/// Local LLR at one UL AP.
pub fn local_llr(est: &RcsEstimate) -> f64 {
    glrt_statistic(est)
}

/// Centralized LLR at the CPU.
pub fn central_llr(est: &RcsEstimate) -> f64 {
    glrt_statistic(est)
}

/// CPU fusion of local LLRs: a plain sum.
pub fn fuse_llrs(stats: &[f64]) -> f64 {
    stats.iter().sum()
}

/// Prior-free ML estimate; fails with a conditioning report when the Gram
/// matrix is not invertible (short windows cannot identify `M_d` unknowns).
pub fn mle_rcs(meas: &[CMat], covs: &[CMat], obs: &[CVec]) -> Result<CVec> {
    if meas.is_empty() {
        return Err(Error::Config("mle_rcs: estimation needs at least one slot".into()));
    }
    let dim = meas[0].ncols();
    let mut gram = CMat::zeros(dim, dim);
    let mut score = CVec::zeros(dim);
    for ((r, cov), y) in meas.iter().zip(covs.iter()).zip(obs.iter()) {
        let solver = HermSolver::new(cov, "mle_rcs")?;
        gram += r.adjoint() * solver.solve_mat(r);
        score += r.adjoint() * solver.solve_vec(y);
    }
    match HermSolver::new(&gram, "mle_rcs") {
        Ok(s) => Ok(s.solve_vec(&score)),
        Err(_) => {
            let eig = crate::linalg::hermitize(&gram).symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(0.0, f64::max);
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            Err(Error::RankDeficient {
                context: "mle_rcs".into(),
                cond,
            })
        }
    }
}

/// Exact decomposition of the centralized GLRT into fused local statistics
/// plus a coupling residual.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// Centralized statistic computed directly from `Σ_s`.
    pub t_central: f64,
    /// Local statistics computed from `Σ_{s,m}`.
    pub t_locals: Vec<f64>,
    /// Coupling residual `δ_T` from the decomposition.
    pub delta_t: f64,
    /// `|T − (Σ_m T_m + δ_T)| / (1 + |T|)`.
    pub relative_residual: f64,
}

/// Evaluates both sides of the identity `T = Σ_m T_m + δ_T`.
///
/// The residual is assembled from the block-diagonalized covariance
/// `Σ_s^D[τ]` and the inverse correction `Δ_s[τ] = Σ_s⁻¹[τ] − (Σ_s^D[τ])⁻¹`
/// (the matrix-inversion-lemma form of the correction, valid even when the
/// off-diagonal user coupling is singular):
/// `T₁ = (Σ_τ R̈ᴴ(Σ_s^D)⁻¹R̈ + Σ_γ⁻¹)⁻¹`, `t₂ = Σ_τ R̈ᴴ(Σ_s^D)⁻¹r`,
/// `Δ₂ = Σ_τ R̈ᴴΔ_s r`, `Δ₁ = −T₁·G·(T₁⁻¹+G)⁻¹` with `G = Σ_τ R̈ᴴΔ_s R̈`,
/// and `δ_T = t₂ᴴΔ₁t₂ + t₂ᴴ(Δ₁+T₁)Δ₂ + Δ₂ᴴ(Δ₁+T₁)t₂ + Δ₂ᴴ(Δ₁+T₁)Δ₂`.
pub fn theorem1_residual(inst: &DetectionInstance) -> Result<Theorem1Report> {
    let t = inst.slots();
    let dim = inst.m_u * inst.m_d;

    // Direct centralized path.
    let central = estimate_rcs_central(inst)?;
    let t_central = central_llr(&central);

    // Distributed path.
    let locals = estimate_all_local(inst)?;
    let t_locals: Vec<f64> = locals.iter().map(local_llr).collect();
    let t1 = block_diag(&locals.iter().map(|l| l.upsilon.clone()).collect::<Vec<_>>());
    let t2 = stack_vecs(&locals.iter().map(|l| l.score.clone()).collect::<Vec<_>>());

    // Coupling terms.
    let mut delta2 = CVec::zeros(dim);
    let mut g = CMat::zeros(dim, dim);
    for tau in 0..t {
        let full = HermSolver::new(&inst.global_noise_cov(tau), "theorem1_residual/full")?;
        let blockd = HermSolver::new(&inst.block_diag_noise_cov(tau), "theorem1_residual/block")?;
        let delta_s = full.inverse() - blockd.inverse();
        let r = inst.global_meas(tau);
        let rh_ds = r.adjoint() * &delta_s;
        delta2 += &rh_ds * &inst.obs[tau];
        g += rh_ds * r;
    }

    // Δ₁ = −T₁·G·(T₁⁻¹ + G)⁻¹; T₁⁻¹ + G is the centralized posterior
    // precision, so it stays Hermitian PD.
    let mut t1_inv = CMat::zeros(dim, dim);
    for (mi, l) in locals.iter().enumerate() {
        let prec = HermSolver::new(&l.upsilon, "theorem1_residual/t1")?.inverse();
        t1_inv
            .view_mut((mi * inst.m_d, mi * inst.m_d), (inst.m_d, inst.m_d))
            .copy_from(&prec);
    }
    let b = HermSolver::new(&(t1_inv + &g), "theorem1_residual/precision")?;
    let delta1 = -(&t1 * &g * b.inverse());

    let d1_plus_t1 = &delta1 + &t1;
    let quad = (t2.adjoint() * &delta1 * &t2)[(0, 0)]
        + (t2.adjoint() * &d1_plus_t1 * &delta2)[(0, 0)]
        + (delta2.adjoint() * &d1_plus_t1 * &t2)[(0, 0)]
        + (delta2.adjoint() * &d1_plus_t1 * &delta2)[(0, 0)];
    let delta_t = assert_real(quad, "theorem1_residual/delta_t");

    let fused: f64 = t_locals.iter().sum();
    let relative_residual = (t_central - (fused + delta_t)).abs() / (1.0 + t_central.abs());
    Ok(Theorem1Report {
        t_central,
        t_locals,
        delta_t,
        relative_residual,
    })
}

/// Bayesian information matrix `B = Σ_τ R̈ᴴΣ_s⁻¹R̈ + Σ_γ⁻¹`.
///
/// `B⁻¹` lower-bounds the MSE matrix of any Bayesian RCS estimator, and the
/// centralized MAP estimator attains it.
pub fn bcrlb(inst: &DetectionInstance) -> Result<CMat> {
    let dim = inst.m_u * inst.m_d;
    let mut b = CMat::zeros(dim, dim);
    for (i, &s) in inst.sigma_gamma.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::Config(format!(
                "bcrlb: Σ_γ must be positive definite (σ[{i}] = {s})"
            )));
        }
        b[(i, i)] = creal(1.0 / s);
    }
    for tau in 0..inst.slots() {
        let solver = HermSolver::new(&inst.global_noise_cov(tau), "bcrlb")?;
        let r = inst.global_meas(tau);
        b += r.adjoint() * solver.solve_mat(&r);
    }
    Ok(b)
}

/// Distributed-estimation MSE versus the BCRLB.
#[derive(Debug, Clone)]
pub struct DistMseGap {
    /// `blkdiag(Υ_m)`: per-AP posterior covariances of the local estimates.
    pub upsilon_dist: CMat,
    /// Full error covariance of the concatenated local estimates. Its
    /// diagonal blocks are `Υ_m`; the off-diagonal blocks capture the error
    /// correlation induced by the UL users' signals being common across
    /// APs.
    pub mse_dist: CMat,
    /// `mse_dist − B⁻¹`; positive semidefinite.
    pub delta_mse: CMat,
    pub trace_dist: f64,
    pub trace_bcrlb: f64,
}

/// Computes the distributed MSE matrix and its gap to the BCRLB.
///
/// The concatenated-local-MAP error covariance has closed form
/// `E[e_m e_{m'}ᴴ] = Υ_m (Σ_τ R̈_mᴴΣ_{s,m}⁻¹ U_{mm'} Σ_{s,m'}⁻¹R̈_{m'}) Υ_{m'}`
/// for `m ≠ m'`, with `U_{mm'} = Σ_k E_k h_mk h_{m'k}ᴴ` (and `Υ_m` on the
/// diagonal). Dropping the cross blocks leaves the trace unchanged but
/// destroys positive semidefiniteness of the gap, so they are kept.
pub fn dist_mse_gap(inst: &DetectionInstance) -> Result<DistMseGap> {
    let locals = estimate_all_local(inst)?;
    let upsilon_dist = block_diag(
        &locals
            .iter()
            .map(|l| l.upsilon.clone())
            .collect::<Vec<_>>(),
    );

    // Whitened cross terms W_m[τ] = Σ_{s,m}⁻¹[τ] R̈_m[τ].
    let t = inst.slots();
    let mut whitened: Vec<Vec<CMat>> = Vec::with_capacity(t);
    for tau in 0..t {
        let mut per_ap = Vec::with_capacity(inst.m_u);
        for mi in 0..inst.m_u {
            let solver = HermSolver::new(&inst.local_noise_cov(tau, mi), "dist_mse_gap")?;
            per_ap.push(solver.solve_mat(&inst.meas[tau][mi]));
        }
        whitened.push(per_ap);
    }

    let (n, md) = (inst.n, inst.m_d);
    let mut mse_dist = upsilon_dist.clone();
    for mi in 0..inst.m_u {
        for mj in 0..inst.m_u {
            if mi == mj {
                continue;
            }
            let u_cross = inst.user_gram.view((mi * n, mj * n), (n, n));
            let mut s = CMat::zeros(md, md);
            for tau in 0..t {
                s += whitened[tau][mi].adjoint() * u_cross * &whitened[tau][mj];
            }
            let block = &locals[mi].upsilon * s * &locals[mj].upsilon;
            mse_dist
                .view_mut((mi * md, mj * md), (md, md))
                .copy_from(&block);
        }
    }

    let b = bcrlb(inst)?;
    let b_inv = HermSolver::new(&b, "dist_mse_gap/bcrlb")?.inverse();
    let delta_mse = crate::linalg::hermitize(&(&mse_dist - &b_inv));
    let trace_dist = upsilon_dist.trace().re;
    let trace_bcrlb = b_inv.trace().re;
    Ok(DistMseGap {
        upsilon_dist,
        mse_dist,
        delta_mse,
        trace_dist,
        trace_bcrlb,
    })
}

/// Empirical detection threshold.
#[derive(Debug, Clone, Copy)]
pub struct Threshold {
    pub lambda: f64,
    /// `false` when fewer than `1/pfa` null samples back the quantile.
    pub reliable: bool,
}

/// Empirical `(1 − pfa)`-quantile of sorted H0 statistics.
pub fn calibrate_threshold(h0_sorted: &[f64], pfa: f64) -> Result<Threshold> {
    if h0_sorted.is_empty() {
        return Err(Error::Config("threshold calibration needs H0 samples".into()));
    }
    if !(pfa > 0.0 && pfa <= 1.0) {
        return Err(Error::Config(format!("pfa must lie in (0, 1] (got {pfa})")));
    }
    debug_assert!(h0_sorted.windows(2).all(|w| w[0] <= w[1]));
    let n = h0_sorted.len();
    let idx = (((1.0 - pfa) * n as f64).floor() as usize).min(n - 1);
    Ok(Threshold {
        lambda: h0_sorted[idx],
        reliable: n as f64 >= 1.0 / pfa,
    })
}

/// Fraction of H1 statistics exceeding the threshold.
pub fn detection_probability(h1_stats: &[f64], lambda: f64) -> f64 {
    if h1_stats.is_empty() {
        return 0.0;
    }
    h1_stats.iter().filter(|&&s| s > lambda).count() as f64 / h1_stats.len() as f64
}
