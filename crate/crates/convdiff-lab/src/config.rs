//! Study configuration: one TOML/JSON document drives every study kind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use convdiff::kernel::BaseKernel;
use convdiff::model::ModelSpec;
use convdiff::weights::SmoothingKernel;
use convdiff::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Rate,
    Sweep,
    Trajectory,
    Risk,
}

/// Kernel selection by name and support radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelConfig {
    pub name: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn build(&self) -> Result<BaseKernel> {
        BaseKernel::from_name(&self.name, self.radius)
    }
}

/// How measurement locations are placed inside 𝒥 (equidistant).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LocationRule {
    /// Maximal equidistant packing under disjoint supports:
    /// `N = floor(λ(𝒥) / (2 δ r_K (1 + margin)))`.
    MaxPacking {
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// Fixed number of equidistant locations.
    Count { n: usize },
}

fn default_margin() -> f64 {
    0.1
}

/// Observation geometry per study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationConfig {
    /// Resolution grid, strictly decreasing (rate/risk studies use all,
    /// sweep/trajectory use the first entry).
    pub deltas: Vec<f64>,
    pub layout: LocationRule,
    /// The compact evaluation set 𝒥 per axis: [lo, hi].
    pub domain: [f64; 2],
    #[serde(default = "default_guard")]
    pub guard_ratio: f64,
    /// Time resolution: steps per δ² time unit, n_t = ceil(T·κ/δ²).
    #[serde(default = "default_time_refine")]
    pub time_refine: f64,
    #[serde(default = "default_n_t_floor")]
    pub n_t_floor: usize,
}

fn default_guard() -> f64 {
    8.0
}
fn default_time_refine() -> f64 {
    0.25
}
fn default_n_t_floor() -> usize {
    2000
}

/// Bandwidth rules.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HRule {
    Fixed { h: f64 },
    /// h = c · δ^exponent
    DeltaPower { c: f64, exponent: f64 },
    /// h = c · N^{-1/(2β+d)}
    CountPower { c: f64, beta: f64 },
}

impl HRule {
    pub fn bandwidth(&self, delta: f64, n: usize, d: usize) -> f64 {
        match self {
            HRule::Fixed { h } => *h,
            HRule::DeltaPower { c, exponent } => c * delta.powf(*exponent),
            HRule::CountPower { c, beta } => {
                c * (n as f64).powf(-1.0 / (2.0 * beta + d as f64))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsConfig {
    pub v: SmoothingKernel,
    pub h_rule: HRule,
    #[serde(default)]
    pub ridge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusivityMode {
    Known,
    Plugin,
}

impl Default for DiffusivityMode {
    fn default() -> Self {
        DiffusivityMode::Known
    }
}

/// Geometric bandwidth grid for sweep studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub h_from: f64,
    pub h_factor: f64,
    pub h_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub model: ModelSpec,
    pub kernel: KernelConfig,
    pub observation: ObservationConfig,
    pub weights: WeightsConfig,
    #[serde(default)]
    pub diffusivity: DiffusivityMode,
    /// Evaluation points for rate studies.
    #[serde(default = "default_eval_points")]
    pub eval_points: Vec<Vec<f64>>,
    /// Evaluation grid size over 𝒥 for trajectory/risk studies.
    #[serde(default = "default_eval_grid")]
    pub eval_grid: usize,
    /// Midpoint cells per axis for the Λ-integral in risk studies.
    #[serde(default = "default_risk_cells")]
    pub risk_cells: usize,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_replicates() -> usize {
    100
}
fn default_eval_points() -> Vec<Vec<f64>> {
    vec![vec![0.5]]
}
fn default_eval_grid() -> usize {
    25
}
fn default_risk_cells() -> usize {
    50
}
fn default_out_dir() -> String {
    "out".into()
}

impl StudyConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: StudyConfig = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("failed to parse {path:?}: {e}")))?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("failed to parse {path:?}: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.observation.deltas.is_empty() {
            return Err(Error::Config("at least one delta required".into()));
        }
        for w in self.observation.deltas.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config("delta grid must be strictly decreasing".into()));
            }
        }
        let [lo, hi] = self.observation.domain;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(
                "domain must satisfy 0 < lo < hi < 1".into(),
            ));
        }
        if self.kind == StudyKind::Sweep && self.sweep.is_none() {
            return Err(Error::Config("sweep studies need a [sweep] section".into()));
        }
        self.kernel.build()?;
        Ok(())
    }

    /// Equidistant locations over 𝒥 for one resolution level.
    pub fn locations(&self, delta: f64, kernel: &BaseKernel) -> Result<Vec<Vec<f64>>> {
        let [lo, hi] = self.observation.domain;
        let n = match &self.observation.layout {
            LocationRule::MaxPacking { margin } => {
                let len = hi - lo;
                let spacing = 2.0 * delta * kernel.support_radius() * (1.0 + margin);
                (len / spacing).floor() as usize
            }
            LocationRule::Count { n } => *n,
        };
        if n < 2 {
            return Err(Error::Config(format!(
                "delta = {delta} leaves fewer than two locations in {:?}",
                self.observation.domain
            )));
        }
        Ok((0..n)
            .map(|k| vec![lo + (hi - lo) * k as f64 / (n - 1) as f64])
            .collect())
    }

    /// Grid size for one resolution level: the measurement guard requires
    /// `δ·r_K/Δx ≥ guard_ratio`.
    pub fn grid_points(&self, delta: f64, kernel: &BaseKernel) -> usize {
        let dx_max = delta * kernel.support_radius() / self.observation.guard_ratio;
        (1.0 / dx_max).ceil() as usize
    }

    /// Time steps for one resolution level.
    pub fn time_steps(&self, delta: f64) -> usize {
        let from_rule =
            (self.model.t_horizon * self.observation.time_refine / (delta * delta)).ceil() as usize;
        from_rule.max(self.observation.n_t_floor)
    }
}
