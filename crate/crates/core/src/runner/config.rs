//! Experiment configuration and its flat TOML file format.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::scenario::{OverheadModel, SystemParams};
use crate::se::MIN_BLOCKS;
use crate::{Error, Result};

pub const DEFAULT_SWEEP: [usize; 6] = [10, 25, 50, 100, 250, 500];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: SystemParams,
    /// Extra pilots per UE, `N_R`, at each sweep point.
    pub sweep: Vec<usize>,
    /// `N_Q = nq_multiplier * N_R`.
    pub nq_multiplier: usize,
    /// Covariance-estimation realizations averaged per sweep point.
    pub n_outer: usize,
    /// Monte-Carlo blocks per SE expectation.
    pub n_blocks: usize,
    pub grid_step: f64,
    /// Estimation rounds averaged by the regularization-factor search.
    pub n_avg: usize,
    pub seed: u64,
    /// CSV destination; `None` writes to standard output.
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: SystemParams::default(),
            sweep: DEFAULT_SWEEP.to_vec(),
            nq_multiplier: 10,
            n_outer: 20,
            n_blocks: 500,
            grid_step: 0.05,
            n_avg: 10,
            seed: 1,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep must list at least one N_R".into()));
        }
        let p = &self.scenario;
        for &n_r in &self.sweep {
            if n_r == 0 {
                return Err(Error::Config("sweep values must be positive".into()));
            }
            let alpha = p.pilot_overhead_fraction(n_r);
            if alpha > 1.0 {
                return Err(Error::Config(format!(
                    "N_R={n_r}: pilot overhead fraction {alpha} exceeds 1"
                )));
            }
        }
        for (name, v) in [
            ("nq_multiplier", self.nq_multiplier),
            ("n_outer", self.n_outer),
            ("n_avg", self.n_avg),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_blocks < MIN_BLOCKS {
            return Err(Error::Config(format!("n_blocks must be at least {MIN_BLOCKS}")));
        }
        crate::covest::factor_grid(self.grid_step).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Reduced Monte-Carlo effort for smoke runs.
    pub fn quick(mut self) -> Self {
        self.n_outer = self.n_outer.min(5);
        self.n_blocks = self.n_blocks.min(200);
        self.n_avg = self.n_avg.min(4);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let config = file.into_config();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| e.context(format!("reading {}", path.display())))
    }
}

/// On-disk form: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    m: Option<usize>,
    k: Option<usize>,
    l: Option<usize>,
    tau_c: Option<usize>,
    tau_s: Option<usize>,
    rho_ul: Option<f64>,
    rho_tr: Option<f64>,
    spread_deg: Option<f64>,
    antenna_spacing: Option<f64>,
    pathloss_a: Option<f64>,
    pathloss_b: Option<f64>,
    inter_bs_distance: Option<f64>,
    ue_ring_radius: Option<f64>,
    quadrature_order: Option<usize>,
    pilot_overhead: Option<OverheadModel>,
    sweep: Option<Vec<usize>>,
    nq_multiplier: Option<usize>,
    n_outer: Option<usize>,
    n_blocks: Option<usize>,
    grid_step: Option<f64>,
    n_avg: Option<usize>,
    seed: Option<u64>,
    output_path: Option<PathBuf>,
}

impl FileConfig {
    fn into_config(self) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        let s = &mut c.scenario;
        macro_rules! set {
            ($target:expr, $field:ident) => {
                if let Some(v) = self.$field {
                    $target = v;
                }
            };
        }
        set!(s.m, m);
        set!(s.k, k);
        set!(s.l, l);
        set!(s.tau_c, tau_c);
        set!(s.tau_s, tau_s);
        set!(s.rho_ul, rho_ul);
        set!(s.rho_tr, rho_tr);
        set!(s.spread_deg, spread_deg);
        set!(s.antenna_spacing, antenna_spacing);
        set!(s.pathloss_a, pathloss_a);
        set!(s.pathloss_b, pathloss_b);
        set!(s.inter_bs_distance, inter_bs_distance);
        set!(s.ue_ring_radius, ue_ring_radius);
        set!(s.quadrature_order, quadrature_order);
        set!(s.pilot_overhead, pilot_overhead);
        set!(c.sweep, sweep);
        set!(c.nq_multiplier, nq_multiplier);
        set!(c.n_outer, n_outer);
        set!(c.n_blocks, n_blocks);
        set!(c.grid_step, grid_step);
        set!(c.n_avg, n_avg);
        set!(c.seed, seed);
        if self.output_path.is_some() {
            c.output_path = self.output_path;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn parses_flat_keys() {
        let c = ExperimentConfig::from_toml_str(
            "m = 8\nk = 2\nl = 2\nsweep = [5, 10]\nseed = 42\npilot_overhead = \"per_block\"\noutput_path = \"out.csv\"\n",
        )
        .unwrap();
        assert_eq!((c.scenario.m, c.scenario.k, c.scenario.l), (8, 2, 2));
        assert_eq!(c.sweep, vec![5, 10]);
        assert_eq!(c.seed, 42);
        assert_eq!(c.scenario.pilot_overhead, OverheadModel::PerBlock);
        assert_eq!(c.output_path, Some(PathBuf::from("out.csv")));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(ExperimentConfig::from_toml_str("antennas = 8"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml_str("sweep = []").is_err());
        assert!(ExperimentConfig::from_toml_str("n_outer = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("n_blocks = 10").is_err());
        assert!(ExperimentConfig::from_toml_str("grid_step = 0.3").is_err());
        // 1000 * 10 * 7 = 70000 > tau_s blocks
        assert!(ExperimentConfig::from_toml_str("sweep = [1000]\npilot_overhead = \"per_block\"").is_err());
        assert!(ExperimentConfig::from_toml_str("sweep = [1000]").is_ok());
    }

    #[test]
    fn quick_reduces_effort() {
        let q = ExperimentConfig::default().quick();
        assert!(q.n_outer < 20 && q.n_blocks < 500 && q.n_avg < 10);
        q.validate().unwrap();
    }
}
