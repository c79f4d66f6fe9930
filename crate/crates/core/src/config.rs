//! JSON run configuration.
//!
//! Matrices are written as rows of `[re, im]` pairs. Unknown fields are
//! rejected, and schema errors carry the path of the offending field.
//!
//! ```json
//! {
//!   "scenario": "individual-inst",
//!   "n": 2,
//!   "covariances": {
//!     "q11": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]],
//!     "q12": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]],
//!     "q21": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]],
//!     "q22": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
//!   },
//!   "noise_variance": [0.5, 0.5],
//!   "epsilon": 0.1,
//!   "mc_samples": 20000,
//!   "seed": 1
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{matrix_from_pairs, matrix_to_pairs, validate_statistics, ChannelStatistics, SampleSource};
use crate::regions::{OutageSpec, Scenario};
use crate::stat::StatSearchConfig;
use crate::{CMatrix, Complex64, Error, Noise, Result};

/// Rows of `[re, im]` pairs.
pub type MatrixPairs = Vec<Vec<[f64; 2]>>;

pub const DEFAULT_GRID_POINTS: usize = 50;
pub const DEFAULT_BEAMFORMER_PAIRS: usize = 2000;
pub const DEFAULT_CURVE_POINTS: usize = 50;
pub const DEFAULT_PREFIX: &str = "region";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Covariances {
    pub q11: MatrixPairs,
    pub q12: MatrixPairs,
    pub q21: MatrixPairs,
    pub q22: MatrixPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub beamformer_pairs: usize,
    pub curve_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub covariances: Covariances,
    pub noise_variance: [f64; 2],
    /// Common outage level, and the default for both individual levels.
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_individual: Option<[f64; 2]>,
    /// Signed so that negative counts are reported as validation errors.
    pub mc_samples: i64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_error("n", "antenna count must be positive"));
        }
        for (name, rows) in self.matrices() {
            let path = format!("covariances.{name}");
            if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                return Err(config_error(&path, format!("expected a {0}x{0} matrix", self.n)));
            }
        }
        if let Err(e) = self.noise().validate() {
            return Err(config_error("noise_variance", e.to_string()));
        }
        if let Err(e) = validate_statistics(self.statistics_unchecked()?) {
            return Err(config_error("covariances", e.to_string()));
        }
        OutageSpec::common(self.epsilon).map_err(|e| config_error("epsilon", e.to_string()))?;
        if let Some([e1, e2]) = self.epsilon_individual {
            OutageSpec::individual(e1, e2).map_err(|e| config_error("epsilon_individual", e.to_string()))?;
        }
        if self.mc_samples <= 0 {
            return Err(config_error("mc_samples", format!("must be positive, got {}", self.mc_samples)));
        }
        if let Some(grid) = &self.grid {
            if grid.points < 2 {
                return Err(config_error("grid.points", "at least 2 points are needed"));
            }
            for (name, cap) in [("grid.r1_cap", grid.r1_cap), ("grid.r2_cap", grid.r2_cap)] {
                if let Some(c) = cap {
                    if !(c.is_finite() && c > 0.0) {
                        return Err(config_error(name, format!("must be positive and finite, got {c}")));
                    }
                }
            }
        }
        if let Some(search) = &self.search {
            if search.beamformer_pairs == 0 {
                return Err(config_error("search.beamformer_pairs", "must be positive"));
            }
            if search.curve_points < 2 {
                return Err(config_error("search.curve_points", "at least 2 points are needed"));
            }
        }
        if let Some(out) = &self.output {
            if out.prefix.is_empty() || out.prefix.contains(['/', '\\']) {
                return Err(config_error("output.prefix", "must be a nonempty file name prefix"));
            }
        }
        Ok(())
    }

    fn matrices(&self) -> [(&'static str, &MatrixPairs); 4] {
        let c = &self.covariances;
        [("q11", &c.q11), ("q12", &c.q12), ("q21", &c.q21), ("q22", &c.q22)]
    }

    fn statistics_unchecked(&self) -> Result<ChannelStatistics> {
        let c = &self.covariances;
        Ok(ChannelStatistics {
            q11: matrix_from_pairs(&c.q11)?,
            q12: matrix_from_pairs(&c.q12)?,
            q21: matrix_from_pairs(&c.q21)?,
            q22: matrix_from_pairs(&c.q22)?,
            noise: self.noise(),
        })
    }

    pub fn statistics(&self) -> Result<ChannelStatistics> {
        validate_statistics(self.statistics_unchecked()?)
    }

    pub fn noise(&self) -> Noise {
        Noise::new(self.noise_variance[0], self.noise_variance[1])
    }

    /// Outage spec used for `scenario`.
    pub fn spec_for(&self, scenario: Scenario) -> OutageSpec {
        if scenario.is_common() {
            OutageSpec::Common { epsilon: self.epsilon }
        } else {
            let [e1, e2] = self.epsilon_individual.unwrap_or([self.epsilon; 2]);
            OutageSpec::Individual { epsilon1: e1, epsilon2: e2 }
        }
    }

    pub fn spec(&self) -> OutageSpec {
        self.spec_for(self.scenario)
    }

    pub fn source(&self) -> Result<SampleSource> {
        SampleSource::gaussian(self.statistics()?, self.seed, self.mc_samples as usize)
    }

    pub fn search_config(&self) -> StatSearchConfig {
        let s = self.search.clone().unwrap_or(SearchConfig {
            beamformer_pairs: DEFAULT_BEAMFORMER_PAIRS,
            curve_points: DEFAULT_CURVE_POINTS,
        });
        StatSearchConfig { beamformer_pairs: s.beamformer_pairs, curve_points: s.curve_points, seed: self.seed }
    }

    pub fn grid_points(&self) -> usize {
        self.grid.as_ref().map_or(DEFAULT_GRID_POINTS, |g| g.points)
    }

    pub fn prefix(&self) -> &str {
        self.output.as_ref().map_or(DEFAULT_PREFIX, |o| o.prefix.as_str())
    }

    /// Demo setting: two antennas, noise variance 0.5, outage level 0.1 and
    /// fixed correlated covariances (see [`demo_covariances`]).
    pub fn demo(scenario: Scenario, mc_samples: i64, seed: u64) -> Self {
        let [q11, q12, q21, q22] = demo_covariances();
        RunConfig {
            scenario,
            n: 2,
            covariances: Covariances {
                q11: matrix_to_pairs(&q11),
                q12: matrix_to_pairs(&q12),
                q21: matrix_to_pairs(&q21),
                q22: matrix_to_pairs(&q22),
            },
            noise_variance: [0.5, 0.5],
            epsilon: 0.1,
            epsilon_individual: None,
            mc_samples,
            seed,
            grid: None,
            search: None,
            output: None,
        }
    }
}

/// Demo covariances `[Q11, Q12, Q21, Q22]`:
///
/// ```text
/// Q11 = [[1, 0.5+0.2i], [0.5-0.2i, 1]]    Q12 = [[0.6, 0.3], [0.3, 0.4]]
/// Q21 = [[0.5, 0.2i], [-0.2i, 0.5]]       Q22 = [[1, -0.4+0.3i], [-0.4-0.3i, 1]]
/// ```
///
/// The direct channels are stronger and differently correlated than the
/// cross channels, so the regions are neither symmetric nor trivial.
pub fn demo_covariances() -> [CMatrix; 4] {
    let m = |a: [[(f64, f64); 2]; 2]| CMatrix::from_fn(2, 2, |i, j| Complex64::new(a[i][j].0, a[i][j].1));
    [
        m([[(1.0, 0.0), (0.5, 0.2)], [(0.5, -0.2), (1.0, 0.0)]]),
        m([[(0.6, 0.0), (0.3, 0.0)], [(0.3, 0.0), (0.4, 0.0)]]),
        m([[(0.5, 0.0), (0.0, 0.2)], [(0.0, -0.2), (0.5, 0.0)]]),
        m([[(1.0, 0.0), (-0.4, 0.3)], [(-0.4, -0.3), (1.0, 0.0)]]),
    ]
}
