//! Static world construction: placements, large-scale coefficients, and all
//! deterministic geometry-derived quantities.
//!
//! Everything here is immutable after [`build_scenario`] returns and safe to
//! share read-only across parallel trial workers.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference temperature for thermal noise (K).
pub const NOISE_REF_TEMP_K: f64 = 290.0;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Top-level simulation parameters. Powers and variances are configured in
/// dB/dBm/dBsm (explicit in the key names) and converted to linear units
/// once, in [`build_scenario`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Side of the square deployment area (m).
    pub area_side_m: f64,
    /// Number of access points `M`.
    pub num_aps: usize,
    /// Antennas per AP `N`.
    pub antennas_per_ap: usize,
    /// Number of single-antenna users `K`.
    pub num_users: usize,
    /// Fraction of users with uplink demand, in `[0, 1]`.
    pub ul_user_fraction: f64,
    /// Per-user uplink transmit power (dBm).
    pub ul_power_dbm_per_user: f64,
    /// Total downlink radiated power budget per AP (dBm).
    pub dl_power_budget_dbm: f64,
    /// System bandwidth (Hz).
    pub bandwidth_hz: f64,
    /// Carrier frequency (Hz).
    pub carrier_freq_hz: f64,
    /// Receiver noise figure (dB).
    pub noise_figure_db: f64,
    /// Target RCS variance (dBsm).
    pub rcs_variance_dbsm: f64,
    /// Aggregate residual inter-AP interference level, dB above the noise
    /// floor at full DL power. `ζ_mj` gains are set uniformly so that
    /// `Σ_j ζ_mj·E‖x_j‖² = 10^(level/10)·Ñ`.
    pub inai_residual_db: f64,
    /// Residual clutter level, dB above the noise floor (`0` disables
    /// clutter entirely).
    pub clutter_db: f64,
    /// Observation window length `T` in slots.
    pub obs_window_slots: usize,
    /// Monte Carlo trial count.
    pub mc_trials: usize,
    /// Master RNG seed.
    pub rng_seed: u64,
    /// Sensing hot-spot; defaults to the area center.
    pub target_position_m: Option<[f64; 2]>,
    /// AP antenna height used by the path-loss constant (m).
    pub ap_height_m: f64,
    /// User antenna height used by the path-loss constant (m).
    pub user_height_m: f64,
    /// Near breakpoint of the three-slope path-loss model (m).
    pub pl_breakpoint_near_m: f64,
    /// Far breakpoint of the three-slope path-loss model (m).
    pub pl_breakpoint_far_m: f64,
    /// SNR floor (dB) defining the traffic-counting radius `r_o`.
    pub snr_floor_db: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            area_side_m: 500.0,
            num_aps: 8,
            antennas_per_ap: 8,
            num_users: 10,
            ul_user_fraction: 0.5,
            ul_power_dbm_per_user: 23.0,
            dl_power_budget_dbm: 30.0,
            bandwidth_hz: 20e6,
            carrier_freq_hz: 1.9e9,
            noise_figure_db: 9.0,
            rcs_variance_dbsm: 10.0,
            inai_residual_db: 20.0,
            clutter_db: 0.0,
            obs_window_slots: 100,
            mc_trials: 5000,
            rng_seed: 1,
            target_position_m: None,
            ap_height_m: 15.0,
            user_height_m: 1.65,
            pl_breakpoint_near_m: 10.0,
            pl_breakpoint_far_m: 50.0,
            snr_floor_db: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_aps < 1 || self.antennas_per_ap < 1 || self.num_users < 1 {
            return fail("num_aps, antennas_per_ap, and num_users must all be >= 1");
        }
        if !(0.0..=1.0).contains(&self.ul_user_fraction) {
            return fail("ul_user_fraction must lie in [0, 1]");
        }
        if self.area_side_m <= 0.0 || self.bandwidth_hz <= 0.0 || self.carrier_freq_hz <= 0.0 {
            return fail("area_side_m, bandwidth_hz, and carrier_freq_hz must be > 0");
        }
        if self.obs_window_slots < 1 {
            return fail("obs_window_slots must be >= 1");
        }
        if self.mc_trials < 1 {
            return fail("mc_trials must be >= 1");
        }
        if !(self.pl_breakpoint_near_m > 0.0
            && self.pl_breakpoint_far_m > self.pl_breakpoint_near_m)
        {
            return fail("path-loss breakpoints must satisfy 0 < near < far");
        }
        if let Some(p) = self.target_position_m {
            if p.iter().any(|v| !(0.0..=self.area_side_m).contains(v)) {
                return fail("target_position_m must lie inside the deployment square");
            }
        }
        Ok(())
    }

    /// Per-user UL power (W).
    pub fn ul_power_w(&self) -> f64 {
        dbm_to_watts(self.ul_power_dbm_per_user)
    }

    /// DL power budget per AP (W).
    pub fn dl_power_w(&self) -> f64 {
        dbm_to_watts(self.dl_power_budget_dbm)
    }

    /// Carrier wavelength (m).
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Number of UL users implied by `ul_user_fraction`.
    pub fn num_ul_users(&self) -> usize {
        ((self.num_users as f64) * self.ul_user_fraction).round() as usize
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Thermal noise power `Ñ = k_B · 290 K · B · 10^(NF/10)` (W).
pub fn noise_power(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * NOISE_REF_TEMP_K * bandwidth_hz * db_to_linear(noise_figure_db)
}

/// Composite two-way sensing path gain
/// `β_s = λ_c² / ((4π)³ · d_m² · d_j²)`.
///
/// `d_j` is transmit-AP→target distance, `d_m` target→receive-AP.
pub fn path_loss_sensing(d_j: f64, d_m: f64, lambda_c: f64) -> Result<f64> {
    if d_j <= 0.0 || d_m <= 0.0 {
        return Err(Error::Domain(format!(
            "sensing path loss requires positive distances (got d_j={d_j}, d_m={d_m})"
        )));
    }
    let four_pi_cubed = (4.0 * std::f64::consts::PI).powi(3);
    Ok(lambda_c * lambda_c / (four_pi_cubed * d_m * d_m * d_j * d_j))
}

/// Three-slope urban path-loss model (COST-Hahn form used throughout the
/// cell-free literature). Distances below `d0` saturate, a `d²` slope runs
/// to `d1`, and a `d^3.5` slope beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeSlopeModel {
    /// Fixed loss at 1 km (dB).
    pub constant_db: f64,
    /// Near breakpoint (m).
    pub d0_m: f64,
    /// Far breakpoint (m).
    pub d1_m: f64,
}

impl ThreeSlopeModel {
    /// Fixed-loss constant from carrier frequency and antenna heights.
    pub fn constant_for(f_hz: f64, h_base_m: f64, h_user_m: f64) -> f64 {
        let f_mhz = f_hz / 1e6;
        46.3 + 33.9 * f_mhz.log10() - 13.82 * h_base_m.log10()
            - (1.1 * f_mhz.log10() - 0.7) * h_user_m
            + (1.56 * f_mhz.log10() - 0.8)
    }

    /// Linear power gain at distance `d` meters.
    pub fn gain(&self, d_m: f64) -> f64 {
        let d = d_m.max(1e-3) / 1000.0; // model distances are in km
        let d0 = self.d0_m / 1000.0;
        let d1 = self.d1_m / 1000.0;
        let pl_db = if d <= d0 {
            -(self.constant_db + 15.0 * d1.log10() + 20.0 * d0.log10())
        } else if d <= d1 {
            -(self.constant_db + 15.0 * d1.log10() + 20.0 * d.log10())
        } else {
            -(self.constant_db + 35.0 * d.log10())
        };
        db_to_linear(pl_db)
    }
}

/// A UL/DL partition of the AP set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApSplit {
    pub ul_aps: Vec<usize>,
    pub dl_aps: Vec<usize>,
}

impl ApSplit {
    pub fn m_u(&self) -> usize {
        self.ul_aps.len()
    }

    pub fn m_d(&self) -> usize {
        self.dl_aps.len()
    }

    /// Checks the partition property against `M` APs.
    pub fn validate(&self, num_aps: usize) -> Result<()> {
        let mut seen = vec![false; num_aps];
        for &m in self.ul_aps.iter().chain(self.dl_aps.iter()) {
            if m >= num_aps || seen[m] {
                return Err(Error::Config(format!(
                    "AP split is not a partition of 0..{num_aps}"
                )));
            }
            seen[m] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("AP split does not cover all APs".into()));
        }
        Ok(())
    }
}

/// The static world: placements, large-scale gains, and geometry-derived
/// sensing quantities. All gains are linear.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SimConfig,
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub target_position: [f64; 2],
    /// UL user indices (first `K_u` users by convention).
    pub ul_users: Vec<usize>,
    /// DL user indices.
    pub dl_users: Vec<usize>,
    /// AP→user path gain `β_mk`, `M×K`.
    pub beta: DMatrix<f64>,
    /// User→user path gain `κ_nk`, `K×K` (diagonal unused).
    pub kappa: DMatrix<f64>,
    /// Residual inter-AP interference gain `ζ_mj`, `M×M`.
    pub zeta: DMatrix<f64>,
    /// Residual clutter gain `ν_mj`, `M×M` (zero when disabled).
    pub nu: DMatrix<f64>,
    /// RCS variance `σ_mj` (linear), `M×M`.
    pub sigma_rcs: DMatrix<f64>,
    /// Thermal noise power `Ñ` (W).
    pub noise_power_w: f64,
    /// Carrier wavelength (m).
    pub lambda_c: f64,
    /// Distance from each AP to the target (m).
    pub ap_target_distance: Vec<f64>,
    /// Bearing from each AP to the target (rad), used as AoA/AoD.
    pub ap_target_bearing: Vec<f64>,
    /// AP→user path-loss model.
    pub ap_user_model: ThreeSlopeModel,
    /// User→user path-loss model (for the inter-user interference gain).
    pub user_user_model: ThreeSlopeModel,
}

impl Scenario {
    pub fn num_aps(&self) -> usize {
        self.config.num_aps
    }

    pub fn antennas(&self) -> usize {
        self.config.antennas_per_ap
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn ul_power_w(&self) -> f64 {
        self.config.ul_power_w()
    }

    pub fn dl_power_w(&self) -> f64 {
        self.config.dl_power_w()
    }

    /// Two-way sensing gain between DL AP `j` and UL AP `m`.
    pub fn beta_sensing(&self, m: usize, j: usize) -> f64 {
        path_loss_sensing(
            self.ap_target_distance[j],
            self.ap_target_distance[m],
            self.lambda_c,
        )
        .expect("AP-target distances are positive by construction")
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds the static world from a validated config and a seeded generator.
///
/// APs and users are placed i.i.d. uniform over the square; the target sits
/// at the configured hot-spot (area center by default). `β` and `κ` follow
/// the three-slope model, `ζ`/`ν` are flat offsets above the noise floor,
/// and `σ_mj = σ` uniformly.
pub fn build_scenario(config: &SimConfig, rng: &mut impl Rng) -> Result<Scenario> {
    config.validate()?;
    let m = config.num_aps;
    let k = config.num_users;
    let side = config.area_side_m;

    let mut place = || [rng.random::<f64>() * side, rng.random::<f64>() * side];
    let ap_positions: Vec<[f64; 2]> = (0..m).map(|_| place()).collect();
    let user_positions: Vec<[f64; 2]> = (0..k).map(|_| place()).collect();
    let target_position = config
        .target_position_m
        .unwrap_or([side / 2.0, side / 2.0]);

    let k_u = config.num_ul_users();
    let ul_users: Vec<usize> = (0..k_u).collect();
    let dl_users: Vec<usize> = (k_u..k).collect();

    let ap_user_model = ThreeSlopeModel {
        constant_db: ThreeSlopeModel::constant_for(
            config.carrier_freq_hz,
            config.ap_height_m,
            config.user_height_m,
        ),
        d0_m: config.pl_breakpoint_near_m,
        d1_m: config.pl_breakpoint_far_m,
    };
    let user_user_model = ThreeSlopeModel {
        constant_db: ThreeSlopeModel::constant_for(
            config.carrier_freq_hz,
            config.user_height_m,
            config.user_height_m,
        ),
        d0_m: config.pl_breakpoint_near_m,
        d1_m: config.pl_breakpoint_far_m,
    };

    let beta = DMatrix::from_fn(m, k, |mi, ki| {
        ap_user_model.gain(dist(ap_positions[mi], user_positions[ki]))
    });
    let kappa = DMatrix::from_fn(k, k, |ni, ki| {
        if ni == ki {
            0.0
        } else {
            user_user_model.gain(dist(user_positions[ni], user_positions[ki]))
        }
    });

    let noise_power_w = noise_power(config.bandwidth_hz, config.noise_figure_db);
    let dl_power = config.dl_power_w();
    // Flat offsets: at full DL power the aggregate residual InAI (clutter)
    // received across DL APs sits `inai_residual_db` (`clutter_db`) above Ñ.
    let zeta_gain = db_to_linear(config.inai_residual_db) * noise_power_w / dl_power;
    let nu_gain = if config.clutter_db == 0.0 {
        0.0
    } else {
        db_to_linear(config.clutter_db) * noise_power_w / dl_power
    };
    let zeta = DMatrix::from_element(m, m, zeta_gain);
    let nu = DMatrix::from_element(m, m, nu_gain);
    let sigma_rcs = DMatrix::from_element(m, m, db_to_linear(config.rcs_variance_dbsm));

    let ap_target_distance: Vec<f64> = ap_positions
        .iter()
        .map(|&p| dist(p, target_position).max(1e-6))
        .collect();
    let ap_target_bearing: Vec<f64> = ap_positions
        .iter()
        .map(|&p| (target_position[1] - p[1]).atan2(target_position[0] - p[0]))
        .collect();

    Ok(Scenario {
        config: config.clone(),
        ap_positions,
        user_positions,
        target_position,
        ul_users,
        dl_users,
        beta,
        kappa,
        zeta,
        nu,
        sigma_rcs,
        noise_power_w,
        lambda_c: config.wavelength_m(),
        ap_target_distance,
        ap_target_bearing,
        ap_user_model,
        user_user_model,
    })
}
