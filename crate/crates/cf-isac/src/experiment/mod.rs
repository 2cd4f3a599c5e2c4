//! Experiment orchestration: configuration files, the Monte Carlo engine,
//! per-figure experiment runners, and CSV/JSON result emission.
//!
//! A run is a pure function of the configuration file and the seed; rerun
//! it and the emitted CSV is byte-identical. Per-trial randomness comes
//! from counter-derived substreams, so the records do not depend on the
//! worker count either.

pub mod engine;
mod runners;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Constellation;
use crate::error::{Error, Result};
use crate::performance::Duplex;
use crate::precoding::SensingPrecoder;
use crate::scenario::SimConfig;

/// The eight experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Detection probability versus false-alarm rate.
    Roc,
    /// Detection probability versus RCS variance at a fixed PFA.
    PodVsRcs,
    /// Detection probability versus observation-window length.
    PodVsT,
    /// RCS-estimation NMSE versus RCS variance, with the BCRLB.
    NmseVsRcs,
    /// CDF of sum UL-DL SE over random geometries, DTDD versus TDD.
    SeCdf,
    /// Joint-estimation UL symbol error rate versus UL transmit power.
    SerVsPower,
    /// Communication SE versus sensing SE as the RCS variance sweeps.
    SeTradeoff,
    /// Scheduling strategies compared on the sum-SE CDF.
    SchedulingCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Roc,
        ExperimentKind::PodVsRcs,
        ExperimentKind::PodVsT,
        ExperimentKind::NmseVsRcs,
        ExperimentKind::SeCdf,
        ExperimentKind::SerVsPower,
        ExperimentKind::SeTradeoff,
        ExperimentKind::SchedulingCompare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Roc => "roc",
            ExperimentKind::PodVsRcs => "pod_vs_rcs",
            ExperimentKind::PodVsT => "pod_vs_t",
            ExperimentKind::NmseVsRcs => "nmse_vs_rcs",
            ExperimentKind::SeCdf => "se_cdf",
            ExperimentKind::SerVsPower => "ser_vs_power",
            ExperimentKind::SeTradeoff => "se_tradeoff",
            ExperimentKind::SchedulingCompare => "scheduling_compare",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == name)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment '{name}'; expected one of: {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }

    /// Used as the leading RNG stream label so experiments never share
    /// substreams.
    fn stream_id(&self) -> u64 {
        100 + Self::ALL.iter().position(|k| k == self).unwrap() as u64
    }
}

/// Which detector(s) an experiment evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Centralized,
    Distributed,
    Mle,
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Centralized => "centralized",
            Detector::Distributed => "distributed",
            Detector::Mle => "mle",
        }
    }
}

/// Precoding section of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrecodingConfig {
    /// Power fraction reserved for the sensing beam.
    pub pi_s: f64,
    pub sensing_precoder: SensingPrecoder,
    /// RZF regularizer; absent means calibrate by grid search per geometry.
    pub rzf_epsilon: Option<f64>,
}

impl Default for PrecodingConfig {
    fn default() -> Self {
        Self {
            pi_s: 0.2,
            sensing_precoder: SensingPrecoder::UserCentric,
            rzf_epsilon: None,
        }
    }
}

/// Experiment section of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub duplex: Duplex,
    pub detectors: Vec<Detector>,
    /// False-alarm grid for ROC-style experiments.
    pub pfa_grid: Vec<f64>,
    /// Operating PFA for PoD sweeps.
    pub pfa: f64,
    /// RCS variance sweep (dBsm).
    pub rcs_dbsm_grid: Vec<f64>,
    /// Observation-window sweep (slots).
    pub window_grid: Vec<usize>,
    /// UL power sweep (dBm per user).
    pub ul_power_dbm_grid: Vec<f64>,
    /// UL data constellation for SER experiments.
    pub constellation: Constellation,
    /// Redraw the geometry every trial instead of fixing it. Defaults per
    /// kind: CDF experiments redraw, detector experiments hold the
    /// hot-spot geometry fixed and redraw channels only.
    pub geometry_redraw: Option<bool>,
    /// Percentile grid for CDF summaries (percent).
    pub percentiles: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Roc,
            duplex: Duplex::Dtdd,
            detectors: vec![Detector::Centralized, Detector::Distributed],
            pfa_grid: vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0],
            pfa: 0.1,
            rcs_dbsm_grid: vec![],
            window_grid: vec![],
            ul_power_dbm_grid: vec![],
            constellation: Constellation::Qpsk,
            geometry_redraw: None,
            percentiles: (1..=19).map(|i| 5.0 * i as f64).collect(),
        }
    }
}

/// Full configuration file: `[scenario]`, `[precoding]`, `[experiment]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub scenario: SimConfig,
    pub precoding: PrecodingConfig,
    pub experiment: ExperimentSpec,
}

impl FileConfig {
    /// Parses TOML (`.toml`) or JSON (`.json`/anything else) by extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("toml"))
            .unwrap_or(false);
        let cfg: FileConfig = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !(0.0..=1.0).contains(&self.precoding.pi_s) {
            return Err(Error::Config("pi_s must lie in [0, 1]".into()));
        }
        if let Some(eps) = self.precoding.rzf_epsilon {
            if eps <= 0.0 {
                return Err(Error::Config("rzf_epsilon must be > 0".into()));
            }
        }
        let spec = &self.experiment;
        if spec.pfa_grid.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) || spec.pfa_grid.is_empty() {
            return Err(Error::Config("pfa_grid entries must lie in (0, 1]".into()));
        }
        if !(spec.pfa > 0.0 && spec.pfa <= 1.0) {
            return Err(Error::Config("pfa must lie in (0, 1]".into()));
        }
        if spec.detectors.is_empty() {
            return Err(Error::Config("at least one detector required".into()));
        }
        if let Duplex::Tdd { ul_fraction } = spec.duplex {
            if !(0.0..=1.0).contains(&ul_fraction) {
                return Err(Error::Config("tdd ul_fraction must lie in [0, 1]".into()));
            }
        }
        if spec.window_grid.iter().any(|&t| t == 0) {
            return Err(Error::Config("window_grid entries must be ≥ 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One aggregated measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Sweep coordinates as `(key, value)` pairs; identical keys across all
    /// records of one experiment.
    pub sweep: Vec<(String, String)>,
    pub metric: String,
    pub value: f64,
    /// Monte Carlo standard error; `None` when undefined (single trial).
    pub stderr: Option<f64>,
    pub trials: usize,
}

/// A finished experiment with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub records: Vec<Record>,
    pub config_hash: String,
    pub seed: u64,
    pub software_version: String,
    pub config: FileConfig,
}

/// Runs the configured experiment.
pub fn run_experiment(config: &FileConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let records = match config.experiment.kind {
        ExperimentKind::Roc => runners::run_roc(config)?,
        ExperimentKind::PodVsRcs => runners::run_pod_vs_rcs(config)?,
        ExperimentKind::PodVsT => runners::run_pod_vs_t(config)?,
        ExperimentKind::NmseVsRcs => runners::run_nmse_vs_rcs(config)?,
        ExperimentKind::SeCdf => runners::run_se_cdf(config)?,
        ExperimentKind::SerVsPower => runners::run_ser_vs_power(config)?,
        ExperimentKind::SeTradeoff => runners::run_se_tradeoff(config)?,
        ExperimentKind::SchedulingCompare => runners::run_scheduling_compare(config)?,
    };
    Ok(ExperimentResult {
        kind: config.experiment.kind,
        records,
        config_hash: config.hash(),
        seed: config.scenario.rng_seed,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
    })
}

/// Output serialization formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

/// Writes `<dir>/<kind>.csv` and/or `<dir>/<kind>.json`; returns the paths.
pub fn emit_results(
    result: &ExperimentResult,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let path = dir.join(format!("{}.csv", result.kind.name()));
        let mut file = std::fs::File::create(&path)?;
        file.write_all(render_csv(result)?.as_bytes())?;
        written.push(path);
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let path = dir.join(format!("{}.json", result.kind.name()));
        let json =
            serde_json::to_string_pretty(result).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&path, json)?;
        written.push(path);
    }
    Ok(written)
}

/// CSV columns: sweep keys, then `metric,value,stderr,trials,seed`.
pub fn render_csv(result: &ExperimentResult) -> Result<String> {
    let keys: Vec<String> = result
        .records
        .first()
        .map(|r| r.sweep.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    for r in &result.records {
        let rk: Vec<&String> = r.sweep.iter().map(|(k, _)| k).collect();
        if rk.len() != keys.len() || rk.iter().zip(keys.iter()).any(|(a, b)| *a != b) {
            return Err(Error::Config(
                "inconsistent sweep keys across records".into(),
            ));
        }
    }
    let mut out = String::new();
    for k in &keys {
        out.push_str(k);
        out.push(',');
    }
    out.push_str("metric,value,stderr,trials,seed\n");
    for r in &result.records {
        for (_, v) in &r.sweep {
            out.push_str(v);
            out.push(',');
        }
        let stderr = r.stderr.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.metric, r.value, stderr, r.trials, result.seed
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_roundtrip() {
        for kind in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(ExperimentKind::parse("nope").is_err());
        assert_eq!(ExperimentKind::ALL.len(), 8);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = FileConfig::default();
        let mut b = FileConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.scenario.num_aps = 9;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toml_and_json_configs_parse() {
        let dir = std::env::temp_dir().join("cf_isac_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let toml_path = dir.join("a.toml");
        std::fs::write(
            &toml_path,
            "[scenario]\nnum_aps = 4\n[experiment]\nkind = \"se_cdf\"\n",
        )
        .unwrap();
        let cfg = FileConfig::from_path(&toml_path).unwrap();
        assert_eq!(cfg.scenario.num_aps, 4);
        assert_eq!(cfg.experiment.kind, ExperimentKind::SeCdf);

        let json_path = dir.join("a.json");
        std::fs::write(
            &json_path,
            "{\"scenario\": {\"num_aps\": 5}, \"experiment\": {\"kind\": \"roc\"}}",
        )
        .unwrap();
        let cfg = FileConfig::from_path(&json_path).unwrap();
        assert_eq!(cfg.scenario.num_aps, 5);

        std::fs::write(&toml_path, "[scenario]\nnum_apps = 4\n").unwrap();
        assert!(FileConfig::from_path(&toml_path).is_err());
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut cfg = FileConfig::default();
        cfg.experiment.pfa = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = FileConfig::default();
        cfg.experiment.detectors.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = FileConfig::default();
        cfg.precoding.rzf_epsilon = Some(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_rendering() {
        let result = ExperimentResult {
            kind: ExperimentKind::Roc,
            records: vec![
                Record {
                    sweep: vec![("pfa".into(), "0.1".into())],
                    metric: "pod".into(),
                    value: 0.5,
                    stderr: Some(0.01),
                    trials: 100,
                },
                Record {
                    sweep: vec![("pfa".into(), "0.3".into())],
                    metric: "pod".into(),
                    value: 0.75,
                    stderr: None,
                    trials: 1,
                },
            ],
            config_hash: "ab".into(),
            seed: 7,
            software_version: "0.1.0".into(),
            config: FileConfig::default(),
        };
        let csv = render_csv(&result).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "pfa,metric,value,stderr,trials,seed");
        assert_eq!(lines[1], "0.1,pod,0.5,0.01,100,7");
        // Undefined stderr renders as an empty field.
        assert_eq!(lines[2], "0.3,pod,0.75,,1,7");
        // Constant field count across rows.
        for l in &lines {
            assert_eq!(l.matches(',').count(), 5);
        }
        // Empty records make a header-only CSV.
        let empty = ExperimentResult {
            records: vec![],
            ..result
        };
        assert_eq!(render_csv(&empty).unwrap(), "metric,value,stderr,trials,seed\n");
    }
}
