//! Per-trial random quantities (user channels, RCS, data symbols) and the
//! deterministic steering-vector sensing channel.
//!
//! Everything is a pure function of `(scenario, rng)`; the experiment
//! engine hands each trial its own counter-derived substream.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{cplx, creal, CMat, CVec, C64};
use crate::scenario::{ApSplit, Scenario};

/// One complex Gaussian CN(0, 1) draw.
#[inline]
pub fn standard_complex(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cplx(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform linear array steering vector
/// `a(φ) = [1, e^{jπ sin φ}, …, e^{j(N−1)π sin φ}]ᵀ` (half-wavelength
/// spacing).
pub fn steering_vector(phi: f64, n: usize) -> CVec {
    let s = phi.sin();
    CVec::from_fn(n, |i, _| {
        let arg = std::f64::consts::PI * s * i as f64;
        cplx(arg.cos(), arg.sin())
    })
}

/// Rank-1 sensing channel block `Ṙ = √β_s · a_r(φ_rx) a_t(φ_tx)ᵀ`.
pub fn sensing_block(phi_tx: f64, phi_rx: f64, beta_s: f64, n: usize) -> CMat {
    let at = steering_vector(phi_tx, n);
    let ar = steering_vector(phi_rx, n);
    let scale = creal(beta_s.sqrt());
    CMat::from_fn(n, n, |r, c| scale * ar[r] * at[c])
}

/// `Ṙ_mj` between DL AP `j` and UL AP `m` (global AP indices), built from
/// the scenario's AP-target bearings and two-way path loss.
pub fn sensing_channel(sc: &Scenario, m: usize, j: usize) -> CMat {
    sensing_block(
        sc.ap_target_bearing[j],
        sc.ap_target_bearing[m],
        sc.beta_sensing(m, j),
        sc.antennas(),
    )
}

/// Per-trial channel realizations.
///
/// Channels are drawn for every AP and user so the same draw can be sliced
/// under any UL/DL split (scheduling experiments re-partition the APs
/// without redrawing).
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Per-AP user channel matrix `H_m ∈ C^{N×K}` with columns
    /// `h_mk = √β_mk f_mk`.
    pub h: Vec<CMat>,
    /// RCS draws `γ_mj ~ CN(0, σ_mj)` for every ordered AP pair
    /// (receiver `m`, transmitter `j`).
    pub gamma: CMat,
}

impl ChannelSet {
    /// Channel of user `k` at AP `m`.
    pub fn h_user(&self, m: usize, k: usize) -> CVec {
        self.h[m].column(k).into_owned()
    }

    /// Concatenated channel of user `k` across the given APs (stacking
    /// order follows `aps`).
    pub fn stacked_user_channel(&self, aps: &[usize], k: usize) -> CVec {
        let n = self.h[0].nrows();
        let mut out = CVec::zeros(n * aps.len());
        for (i, &m) in aps.iter().enumerate() {
            out.rows_mut(i * n, n).copy_from(&self.h[m].column(k));
        }
        out
    }

    /// RCS vector `γ_m` toward the DL APs of `split`, for UL AP `m`.
    pub fn gamma_row(&self, m: usize, split: &ApSplit) -> CVec {
        CVec::from_fn(split.m_d(), |ji, _| self.gamma[(m, split.dl_aps[ji])])
    }
}

/// Diagonal of `Σ_γ` for a split, stacked receiver-major:
/// `(σ_{m₁j₁}, …, σ_{m₁j_{M_d}}, σ_{m₂j₁}, …)`.
pub fn sigma_gamma_diag(sc: &Scenario, split: &ApSplit) -> DVector<f64> {
    let (mu, md) = (split.m_u(), split.m_d());
    DVector::from_fn(mu * md, |i, _| {
        let m = split.ul_aps[i / md];
        let j = split.dl_aps[i % md];
        sc.sigma_rcs[(m, j)]
    })
}

/// Draws all per-trial fading and RCS realizations.
pub fn draw_channels(sc: &Scenario, rng: &mut impl Rng) -> ChannelSet {
    let n = sc.antennas();
    let (m, k) = (sc.num_aps(), sc.num_users());
    let h = (0..m)
        .map(|mi| {
            CMat::from_fn(n, k, |_, ki| {
                // β = 0 must yield an exactly zero channel, not a tiny one.
                let b = sc.beta[(mi, ki)];
                if b == 0.0 {
                    creal(0.0)
                } else {
                    standard_complex(rng) * b.sqrt()
                }
            })
        })
        .collect();
    let gamma = CMat::from_fn(m, m, |mi, ji| {
        standard_complex(rng) * sc.sigma_rcs[(mi, ji)].sqrt()
    });
    ChannelSet { h, gamma }
}

/// Data symbol alphabets. UL streams use the configured constellation; DL
/// user and sensing streams are always Gaussian, matching the SE analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    Gaussian,
    Qpsk,
    Qam16,
}

impl Constellation {
    /// Unit-energy constellation points (finite alphabets only).
    pub fn points(&self) -> Vec<C64> {
        match self {
            Constellation::Gaussian => Vec::new(),
            Constellation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                vec![cplx(a, a), cplx(a, -a), cplx(-a, a), cplx(-a, -a)]
            }
            Constellation::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                let levels = [-3.0, -1.0, 1.0, 3.0];
                let mut pts = Vec::with_capacity(16);
                for &re in &levels {
                    for &im in &levels {
                        pts.push(cplx(re * scale, im * scale));
                    }
                }
                pts
            }
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> C64 {
        match self {
            Constellation::Gaussian => standard_complex(rng),
            _ => {
                let pts = self.points();
                pts[rng.random_range(0..pts.len())]
            }
        }
    }

    /// Nearest-neighbor slicing in Euclidean distance.
    pub fn nearest(&self, z: C64) -> C64 {
        let pts = self.points();
        assert!(
            !pts.is_empty(),
            "nearest-neighbor slicing needs a finite constellation"
        );
        let mut best = pts[0];
        let mut best_d = f64::INFINITY;
        for p in pts {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        best
    }
}

/// One observation window of transmit symbols. Columns index slots.
#[derive(Debug, Clone)]
pub struct SymbolBlock {
    /// UL user symbols, `K_u × T`.
    pub s_u: CMat,
    /// DL user symbols, `K_d × T`.
    pub s_d: CMat,
    /// Sensing symbols, length `T`.
    pub s_s: CVec,
    pub constellation: Constellation,
}

impl SymbolBlock {
    pub fn slots(&self) -> usize {
        self.s_s.len()
    }
}

/// Draws mutually independent unit-power symbol streams.
pub fn draw_symbols(
    k_u: usize,
    k_d: usize,
    t: usize,
    constellation: Constellation,
    rng: &mut impl Rng,
) -> SymbolBlock {
    let s_u = CMat::from_fn(k_u, t, |_, _| constellation.draw(rng));
    let s_d = CMat::from_fn(k_d, t, |_, _| standard_complex(rng));
    let s_s = CVec::from_fn(t, |_, _| standard_complex(rng));
    SymbolBlock {
        s_u,
        s_d,
        s_s,
        constellation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::scenario::{build_scenario, SimConfig};
    use nalgebra::SVD;

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4);
        for x in a.iter() {
            assert!((x - creal(1.0)).norm() < 1e-15);
        }
        // φ = π/2: second entry is e^{jπ} = −1.
        let a = steering_vector(std::f64::consts::FRAC_PI_2, 2);
        assert!((a[0] - creal(1.0)).norm() < 1e-15);
        assert!((a[1] - creal(-1.0)).norm() < 1e-12);
    }

    #[test]
    fn sensing_block_structure() {
        assert!(sensing_block(0.3, -0.7, 0.0, 4).norm() == 0.0);

        let b = sensing_block(0.0, 0.0, 2.25, 3);
        for x in b.iter() {
            assert!((x - creal(1.5)).norm() < 1e-14);
        }

        // Rank-1 with the only singular value √β·N (SVD oracle).
        let (beta, n) = (0.37, 5);
        let blk = sensing_block(0.9, -1.3, beta, n);
        let svd = SVD::new(blk.clone(), false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sv[0] - beta.sqrt() * n as f64).abs() < 1e-12);
        for s in &sv[1..] {
            assert!(*s < 1e-12);
        }

        // Entrywise agreement with √β·outer(a_r, a_t).
        let ar = steering_vector(-1.3, n);
        let at = steering_vector(0.9, n);
        for r in 0..n {
            for c in 0..n {
                let want = creal(beta.sqrt()) * ar[r] * at[c];
                assert!((blk[(r, c)] - want).norm() < 1e-14);
            }
        }
    }

    fn small_scenario(seed: u64) -> crate::scenario::Scenario {
        let config = SimConfig {
            num_aps: 3,
            antennas_per_ap: 2,
            num_users: 4,
            rng_seed: seed,
            ..SimConfig::default()
        };
        build_scenario(&config, &mut substream(seed, &[0])).unwrap()
    }

    #[test]
    fn zero_beta_gives_zero_channel() {
        let mut sc = small_scenario(3);
        sc.beta[(1, 2)] = 0.0;
        let ch = draw_channels(&sc, &mut substream(3, &[1]));
        assert!(ch.h_user(1, 2).iter().all(|x| x.norm() == 0.0));
        assert!(ch.h_user(0, 2).iter().any(|x| x.norm() > 0.0));
    }

    #[test]
    fn channel_draw_reproducible() {
        let sc = small_scenario(5);
        let a = draw_channels(&sc, &mut substream(5, &[2]));
        let b = draw_channels(&sc, &mut substream(5, &[2]));
        assert_eq!(a.h[0], b.h[0]);
        assert_eq!(a.gamma, b.gamma);
    }

    #[test]
    fn rcs_variance_matches_sigma() {
        // MC oracle: mean |γ|² over 10⁵ draws within 3% of σ_mj.
        let sc = small_scenario(11);
        let sigma = sc.sigma_rcs[(0, 1)];
        let mut rng = substream(11, &[3]);
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let g = standard_complex(&mut rng) * sigma.sqrt();
            acc += g.norm_sqr();
        }
        let mean = acc / trials as f64;
        assert!(
            (mean - sigma).abs() / sigma < 0.03,
            "mean |γ|² = {mean}, σ = {sigma}"
        );
    }

    #[test]
    fn channel_variance_matches_beta() {
        let sc = small_scenario(13);
        let beta = sc.beta[(0, 0)];
        let mut rng = substream(13, &[4]);
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += (standard_complex(&mut rng) * beta.sqrt()).norm_sqr();
        }
        assert!((acc / trials as f64 - beta).abs() / beta < 0.03);
    }

    #[test]
    fn qpsk_points_unit_energy() {
        let pts = Constellation::Qpsk.points();
        assert_eq!(pts.len(), 4);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        for p in &pts {
            assert!((p.re.abs() - a).abs() < 1e-15);
            assert!((p.im.abs() - a).abs() < 1e-15);
            assert!((p.norm_sqr() - 1.0).abs() < 1e-15);
        }
        let avg: f64 =
            Constellation::Qam16.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((avg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_symbol_block() {
        let blk = draw_symbols(3, 2, 0, Constellation::Qpsk, &mut substream(1, &[5]));
        assert_eq!(blk.slots(), 0);
        assert_eq!(blk.s_u.ncols(), 0);
    }

    #[test]
    fn symbol_streams_unit_power_and_uncorrelated() {
        // Statistical check of E[s sᴴ] = I over 10⁵ slots, 2% tolerance.
        let t = 100_000;
        let blk = draw_symbols(2, 1, t, Constellation::Gaussian, &mut substream(17, &[6]));
        let mut cov = CMat::zeros(3, 3);
        for tau in 0..t {
            let s = CVec::from_vec(vec![blk.s_u[(0, tau)], blk.s_u[(1, tau)], blk.s_d[(0, tau)]]);
            cov += &s * s.adjoint();
        }
        cov /= creal(t as f64);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[(i, j)].norm() - want).abs() < 0.02,
                    "cov[{i}{j}] = {}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn nearest_neighbor_slicing() {
        let c = Constellation::Qpsk;
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(c.nearest(cplx(0.9, 0.2)), cplx(a, a));
        assert_eq!(c.nearest(cplx(-0.1, -2.0)), cplx(-a, -a));
    }

    #[test]
    fn stacked_channel_layout() {
        let sc = small_scenario(21);
        let ch = draw_channels(&sc, &mut substream(21, &[7]));
        let stacked = ch.stacked_user_channel(&[2, 0], 1);
        assert_eq!(stacked.len(), 4);
        assert_eq!(stacked[0], ch.h[2][(0, 1)]);
        assert_eq!(stacked[2], ch.h[0][(0, 1)]);
    }
}
