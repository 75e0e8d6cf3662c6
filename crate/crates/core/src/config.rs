//! TOML run configuration. Sections mirror the modules: `model`, `region`,
//! `network`, `scheme`, `quadrature`, `training`, `oracle`. Unknown keys are
//! errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ann::NetworkShape;
use crate::error::{Error, Result};
use crate::geometry::{MollifierParams, TruncationRegion};
use crate::market::{MertonModel, MertonParams};
use crate::oracle::QmcConfig;
use crate::quadrature::{AxesMode, RuleSpec, SurrogateConfig};
use crate::trainer::{BumpParams, EnergyMode, IntegralMethod, SolveConfig};

/// A scalar broadcast to every asset, or one value per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAsset {
    All(f64),
    Each(Vec<f64>),
}

impl PerAsset {
    fn len(&self) -> Option<usize> {
        match self {
            PerAsset::All(_) => None,
            PerAsset::Each(v) => Some(v.len()),
        }
    }

    fn expand(&self, d: usize, key: &str) -> Result<Vec<f64>> {
        match self {
            PerAsset::All(v) => Ok(vec![*v; d]),
            PerAsset::Each(v) if v.len() == d => Ok(v.clone()),
            PerAsset::Each(v) => Err(Error::config(key, format!("has {} entries, expected {d}", v.len()))),
        }
    }
}

/// A common off-diagonal correlation, or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correlation {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Correlation {
    fn len(&self) -> Option<usize> {
        match self {
            Correlation::Uniform(_) => None,
            Correlation::Matrix(m) => Some(m.len()),
        }
    }

    fn expand(&self, d: usize, key: &str) -> Result<Vec<Vec<f64>>> {
        match self {
            Correlation::Uniform(c) => Ok((0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { *c }).collect()).collect()),
            Correlation::Matrix(m) if m.len() == d => Ok(m.clone()),
            Correlation::Matrix(m) => Err(Error::config(key, format!("has {} rows, expected {d}", m.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Number of assets; required when every per-asset entry is a scalar.
    #[serde(default)]
    pub d: Option<usize>,
    pub sigma: PerAsset,
    #[serde(default = "zero_correlation")]
    pub rho: Correlation,
    pub r: f64,
    pub lambda: f64,
    pub mu_j: PerAsset,
    pub sigma_j: PerAsset,
    #[serde(default = "zero_correlation")]
    pub rho_j: Correlation,
    /// Basket weights; equal weights `1/d` when absent.
    #[serde(default)]
    pub alpha: Option<PerAsset>,
}

fn zero_correlation() -> Correlation {
    Correlation::Uniform(0.0)
}

impl ModelSection {
    pub fn dim(&self) -> Result<usize> {
        let lens = [
            ("model.sigma", self.sigma.len()),
            ("model.rho", self.rho.len()),
            ("model.mu_j", self.mu_j.len()),
            ("model.sigma_j", self.sigma_j.len()),
            ("model.rho_j", self.rho_j.len()),
            ("model.alpha", self.alpha.as_ref().and_then(PerAsset::len)),
        ];
        let mut d = self.d;
        for (key, len) in lens {
            match (d, len) {
                (None, Some(n)) => d = Some(n),
                (Some(a), Some(b)) if a != b => return Err(Error::config(key, format!("has {b} entries, expected {a}"))),
                _ => {}
            }
        }
        match d {
            Some(0) => Err(Error::config("model.d", "must be at least 1")),
            Some(d) => Ok(d),
            None => Err(Error::config("model.d", "required when all per-asset values are scalars")),
        }
    }

    pub fn params(&self) -> Result<MertonParams> {
        let d = self.dim()?;
        Ok(MertonParams {
            sigma: self.sigma.expand(d, "model.sigma")?,
            rho: self.rho.expand(d, "model.rho")?,
            r: self.r,
            lambda: self.lambda,
            mu_j: self.mu_j.expand(d, "model.mu_j")?,
            sigma_j: self.sigma_j.expand(d, "model.sigma_j")?,
            rho_j: self.rho_j.expand(d, "model.rho_j")?,
            alpha: match &self.alpha {
                Some(a) => a.expand(d, "model.alpha")?,
                None => vec![1.0 / d as f64; d],
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSection {
    pub x_max: f64,
    pub x_r: f64,
    /// Sigmoid sharpness of the mollified lower bound.
    pub eta: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self { x_max: 4.0, x_r: 3.0, eta: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub layers: usize,
    pub width: usize,
    /// Softplus sharpness of the time-value head.
    pub delta: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { layers: 2, width: 64, delta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "one")]
    pub order: usize,
    pub tau: f64,
    #[serde(default = "unit_maturity")]
    pub maturity: f64,
    #[serde(default = "yes")]
    pub boundary_flux: bool,
}

fn one() -> usize {
    1
}

fn unit_maturity() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureMethod {
    Gh,
    Ann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub method: QuadratureMethod,
    pub mode: AxesMode,
    pub nodes: usize,
    pub level: usize,
    pub surrogate: SurrogateConfig,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let r = RuleSpec::default();
        Self { method: QuadratureMethod::Gh, mode: r.mode, nodes: r.nodes, level: r.level, surrogate: SurrogateConfig::default() }
    }
}

impl QuadratureSection {
    pub fn rule(&self) -> RuleSpec {
        RuleSpec { mode: self.mode, nodes: self.nodes, level: self.level }
    }
}

/// Epoch budgets: `full` is the reference schedule, `desk` divides it by 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

impl Preset {
    /// `(epochs_init, epochs_first, epochs_step)`.
    pub fn epochs(self) -> (usize, usize, usize) {
        let full = (1 << 15, 1 << 14, 1 << 12);
        match self {
            Preset::Full => full,
            Preset::Desk => (full.0 / 8, full.1 / 8, full.2 / 8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub preset: Preset,
    pub learning_rate: f64,
    pub epochs_init: Option<usize>,
    pub epochs_first: Option<usize>,
    pub epochs_step: Option<usize>,
    /// Points per epoch; `4096 d` when absent.
    pub samples_per_epoch: Option<usize>,
    /// Points per epoch of the initial fit; `samples_per_epoch` when absent.
    pub init_samples: Option<usize>,
    pub batch: usize,
    pub seed: u64,
    pub energy: EnergyMode,
    pub energy_probes: usize,
    pub face_samples: usize,
    pub precision: Precision,
    pub bump: BumpParams,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            preset: Preset::Desk,
            learning_rate: 3e-4,
            epochs_init: None,
            epochs_first: None,
            epochs_step: None,
            samples_per_epoch: None,
            init_samples: None,
            batch: 512,
            seed: 42,
            energy: EnergyMode::Exact,
            energy_probes: 1,
            face_samples: 256,
            precision: Precision::F32,
            bump: BumpParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub paths: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub scramble: bool,
    pub replicates: usize,
    /// Poisson tail mass of the one-asset series.
    pub series_tolerance: f64,
    /// Largest acceptable absolute error in `compare`.
    pub compare_tolerance: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let q = QmcConfig::default();
        Self {
            paths: q.paths,
            tolerance: q.tolerance,
            seed: q.seed,
            scramble: q.scramble,
            replicates: q.replicates,
            series_tolerance: 1e-14,
            compare_tolerance: 5e-3,
        }
    }
}

impl OracleSection {
    pub fn qmc(&self) -> QmcConfig {
        QmcConfig { paths: self.paths, tolerance: self.tolerance, seed: self.seed, scramble: self.scramble, replicates: self.replicates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub network: NetworkSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.solve_config()?.validate()?;
        self.oracle.qmc().validate()?;
        if !(self.oracle.series_tolerance > 0.0) {
            return Err(Error::config("oracle.series_tolerance", "must be positive"));
        }
        if !(self.oracle.compare_tolerance > 0.0) {
            return Err(Error::config("oracle.compare_tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MertonModel<f64>> {
        MertonModel::new(self.model.params()?)
    }

    pub fn solve_config(&self) -> Result<SolveConfig> {
        let d = self.model.dim()?;
        let params = self.model.params()?;
        let t = &self.training;
        let (ei, ef, es) = t.preset.epochs();
        let samples = t.samples_per_epoch.unwrap_or(4096 * d);
        Ok(SolveConfig {
            order: self.scheme.order,
            tau: self.scheme.tau,
            maturity: self.scheme.maturity,
            shape: NetworkShape::new(d, self.network.layers, self.network.width)
                .map_err(|_| Error::config("network", "layers and width must be positive"))?,
            region: TruncationRegion::new(self.region.x_max, self.region.x_r, params.alpha)?,
            mollifier: MollifierParams { eta: self.region.eta, delta: self.network.delta },
            integral: match self.quadrature.method {
                QuadratureMethod::Gh => IntegralMethod::GaussHermite(self.quadrature.rule()),
                QuadratureMethod::Ann => IntegralMethod::Surrogate(self.quadrature.surrogate.clone()),
            },
            learning_rate: t.learning_rate,
            epochs_init: t.epochs_init.unwrap_or(ei),
            epochs_first: t.epochs_first.unwrap_or(ef),
            epochs_step: t.epochs_step.unwrap_or(es),
            samples_per_epoch: samples,
            init_samples: t.init_samples.unwrap_or(samples),
            batch: t.batch,
            seed: t.seed,
            bump: t.bump,
            energy: t.energy,
            energy_probes: t.energy_probes,
            boundary_flux: self.scheme.boundary_flux,
            face_samples: t.face_samples,
            progress: false,
        })
    }
}

/// Maps a TOML decoding error to a configuration error keyed by the dotted
/// path of the offending entry (section plus field, when recoverable).
fn toml_error(text: &str, err: &toml::de::Error) -> Error {
    let msg = err.message().to_string();
    let offset = err.span().map_or(0, |s| s.start).min(text.len());
    let before = &text[..offset];
    let section = before
        .lines()
        .rev()
        .find_map(|l| {
            let l = l.trim();
            (l.starts_with('[') && l.ends_with(']')).then(|| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
        })
        .unwrap_or_default();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .or_else(|| {
            let line = text[offset..].lines().next().unwrap_or("");
            line.split('=').next().map(|k| k.trim().to_string()).filter(|k| !k.is_empty() && !k.starts_with('['))
        })
        .unwrap_or_default();
    let key = match (section.is_empty(), field.is_empty()) {
        (true, true) => "<root>".to_string(),
        (true, false) => field,
        (false, true) => section,
        (false, false) => format!("{section}.{field}"),
    };
    Error::config(key, msg)
}
