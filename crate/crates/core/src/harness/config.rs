use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fixed start, several prescribed settling times.
    PrescribedTimes,
    /// Fixed settling time, several scaled starts.
    InitialConditions,
    /// One settling time and one start.
    Single,
}

/// Parameters of a batch run. Missing JSON fields take the defaults of
/// [`ExperimentConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_x: usize,
    pub m: usize,
    pub tau: f64,
    pub rho: f64,
    pub n_problems: usize,
    pub seed: u64,
    pub experiment: ExperimentKind,
    #[serde(rename = "T_p_list", alias = "t_p_list")]
    pub t_p_list: Vec<f64>,
    pub init_scales: Vec<f64>,
    pub output_dir: PathBuf,
    pub rtol: f64,
    pub atol: f64,
    pub eps_stop: f64,
    /// Uniform samples on `[0, T_p]`, endpoints included.
    pub n_samples: usize,
    pub oracle_tol: f64,
    pub oracle_max_iter: usize,
    pub write_plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_x: 10,
            m: 20,
            tau: 1.0,
            rho: 0.1,
            n_problems: 100,
            seed: 42,
            experiment: ExperimentKind::PrescribedTimes,
            t_p_list: vec![1.0, 0.8, 0.6, 0.4, 0.2, 0.1],
            init_scales: vec![1.0],
            output_dir: PathBuf::from("out"),
            rtol: FlowParams::DEFAULT_TOL,
            atol: FlowParams::DEFAULT_TOL,
            eps_stop: FlowParams::DEFAULT_EPS_STOP,
            n_samples: 200,
            oracle_tol: 1e-10,
            oracle_max_iter: 1_000_000,
            write_plots: true,
        }
    }
}

impl ExperimentConfig {
    /// Six settling times from 1 down to 0.1, start at all-ones.
    pub fn prescribed_times() -> Self {
        ExperimentConfig::default()
    }

    /// Starts `i·1` for `i = 1..6` with `T_p = 1`.
    pub fn initial_conditions() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::InitialConditions,
            t_p_list: vec![1.0],
            init_scales: (1..=6).map(f64::from).collect(),
            ..ExperimentConfig::default()
        }
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The (T_p, init scale) pairs this experiment runs per instance.
    pub fn settings(&self) -> Vec<(f64, f64)> {
        match self.experiment {
            ExperimentKind::PrescribedTimes => self.t_p_list.iter().map(|&t| (t, self.init_scales[0])).collect(),
            ExperimentKind::InitialConditions => self.init_scales.iter().map(|&s| (self.t_p_list[0], s)).collect(),
            ExperimentKind::Single => vec![(self.t_p_list[0], self.init_scales[0])],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidArgument { name, reason });
        if self.n_x == 0 || self.m == 0 || self.n_problems == 0 {
            return bad("n_x, m, n_problems", "must all be positive".into());
        }
        for (name, v) in [
            ("tau", self.tau),
            ("rho", self.rho),
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("eps_stop", self.eps_stop),
            ("oracle_tol", self.oracle_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be positive and finite, got {v}"));
            }
        }
        if self.n_samples < 2 {
            return bad("n_samples", format!("need at least 2, got {}", self.n_samples));
        }
        if self.t_p_list.is_empty() {
            return bad("T_p_list", "must be nonempty".into());
        }
        if self.init_scales.is_empty() {
            return bad("init_scales", "must be nonempty".into());
        }
        if let Some(t) = self.t_p_list.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return bad("T_p_list", format!("entries must be positive, got {t}"));
        }
        if let Some(s) = self.init_scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad("init_scales", format!("entries must be positive, got {s}"));
        }
        Ok(())
    }
}
