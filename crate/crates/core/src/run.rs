//! Run directories: solving to disk, the manifest, and evaluating a finished
//! run against reference prices.
//!
//! Layout of a run directory:
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | the effective configuration (after `--seed` overrides) |
//! | `manifest.json` | [`RunManifest`] |
//! | `snapshots/u_00000.bin` ... | one [`Checkpoint`] per `t_k` |
//! | `snapshots/g_00000.bin` ... | surrogate parameters, when used |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ann::checkpoint::Checkpoint;
use crate::ann::{Mat, SolutionHead};
use crate::config::{Precision, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::lower_bound_of_moneyness;
use crate::market::MertonModel;
use crate::oracle::{black_scholes_call, merton_series_call, qmc_basket_call, QmcConfig};
use crate::scalar::Real;
use crate::trainer::{solve, SolveReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
const SNAPSHOT_DIR: &str = "snapshots";

/// A file written for snapshot `k`; `path` is relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub k: usize,
    pub t: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub precision: Precision,
    pub config: RunConfig,
    pub checkpoints: Vec<ArtifactEntry>,
    pub surrogates: Vec<ArtifactEntry>,
    pub report: SolveReport,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!("unsupported manifest schema {}", m.schema_version)));
        }
        Ok(m)
    }

    /// Index of the checkpoint whose time is closest to `t` (earlier on ties).
    pub fn nearest(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::config("t", "must be a finite time >= 0"));
        }
        let last = self.checkpoints.last().ok_or_else(|| Error::Checkpoint("manifest lists no checkpoints".into()))?;
        if t > last.t + 1e-9 {
            return Err(Error::config("t", format!("{t} exceeds the solved horizon {}", last.t)));
        }
        let mut best = 0;
        for (i, c) in self.checkpoints.iter().enumerate() {
            if (c.t - t).abs() < (self.checkpoints[best].t - t).abs() {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Solves `cfg` and writes the run directory `out`.
pub fn solve_to_dir(cfg: &RunConfig, out: &Path, progress: bool) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out.join(SNAPSHOT_DIR))?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_toml())?;
    match cfg.training.precision {
        Precision::F32 => solve_typed::<f32>(cfg, out, progress),
        Precision::F64 => solve_typed::<f64>(cfg, out, progress),
    }
}

fn solve_typed<T: Real>(cfg: &RunConfig, out: &Path, progress: bool) -> Result<RunManifest> {
    let model = cfg.model()?;
    let mut scfg = cfg.solve_config()?;
    scfg.progress = progress;
    let mut checkpoints = Vec::new();
    let mut surrogates = Vec::new();
    let solution = solve::<T, _>(&model, &scfg, |cp, surrogate| {
        let rel = format!("{SNAPSHOT_DIR}/u_{:05}.bin", cp.k);
        cp.save(&out.join(&rel))?;
        checkpoints.push(ArtifactEntry { k: cp.k, t: cp.t, path: rel });
        if let Some(s) = surrogate {
            let rel = format!("{SNAPSHOT_DIR}/g_{:05}.bin", cp.k);
            Checkpoint { k: cp.k, t: cp.t, params: s.params.clone() }.save(&out.join(&rel))?;
            surrogates.push(ArtifactEntry { k: cp.k, t: cp.t, path: rel });
        }
        Ok(())
    })?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        seed: cfg.training.seed,
        precision: cfg.training.precision,
        config: cfg.clone(),
        checkpoints,
        surrogates,
        report: solution.report,
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// A finished run loaded for evaluation in double precision.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub model: MertonModel<f64>,
    pub head: SolutionHead<f64>,
}

impl LoadedRun {
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("no run directory at {}", dir.display()))));
        }
        let manifest = RunManifest::load(dir)?;
        let model = manifest.config.model()?;
        let scfg = manifest.config.solve_config()?;
        let head = SolutionHead::new(scfg.region.clone(), &scfg.mollifier, model.params().r);
        Ok(Self { dir: dir.to_path_buf(), manifest, model, head })
    }

    pub fn dim(&self) -> usize {
        self.head.dim()
    }

    /// Checkpoint nearest to `t`, widened to `f64`.
    pub fn checkpoint(&self, t: f64) -> Result<Checkpoint<f64>> {
        let entry = &self.manifest.checkpoints[self.manifest.nearest(t)?];
        Checkpoint::load_converting(&self.dir.join(&entry.path))
    }

    /// Prices along the diagonal `x_i = m` at the checkpoint nearest to `t`.
    pub fn price_curve(&self, t: f64, grid: &[f64]) -> Result<Vec<CurveRow>> {
        let cp = self.checkpoint(t)?;
        let d = self.dim();
        let region = &self.head.region;
        let eta = self.manifest.config.region.eta;
        let r = self.model.params().r;
        let mut xs = Vec::with_capacity(grid.len() * d);
        for &m in grid {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::config("grid", "moneyness values must be finite and >= 0"));
            }
            xs.extend(std::iter::repeat_n(m, d));
        }
        let prices = self.head.values(&cp.params, cp.k, cp.t, &Mat::from_vec(grid.len(), d, xs));
        let mut rows = Vec::with_capacity(grid.len());
        for (&m, &price) in grid.iter().zip(&prices) {
            if !price.is_finite() {
                return Err(Error::NonFinite(format!("price at moneyness {m}")));
            }
            let x = vec![m; d];
            let q = region.projection_factor(&x);
            let intrinsic = lower_bound_of_moneyness(cp.t, q * region.moneyness(&x), eta, r);
            let extension = (1.0 - q) * region.moneyness(&x);
            rows.push(CurveRow { moneyness: m, price, intrinsic, time_value: price - intrinsic - extension, resolved_t: cp.t });
        }
        Ok(rows)
    }

    pub fn compare(&self, t: f64, grid: &[f64], oracle: Oracle, qmc: &QmcConfig) -> Result<Comparison> {
        let p = self.model.params().clone();
        let d = self.dim();
        match oracle {
            Oracle::MertonSeries | Oracle::BlackScholes if d != 1 => {
                return Err(Error::config("oracle", format!("{} requires d = 1, the run has d = {d}", oracle.name())));
            }
            Oracle::BlackScholes if p.lambda != 0.0 => {
                return Err(Error::config("oracle", "black-scholes requires lambda = 0"));
            }
            _ => {}
        }
        let curve = self.price_curve(t, grid)?;
        let t = curve.first().map_or(t, |c| c.resolved_t);
        let series_tol = self.manifest.config.oracle.series_tolerance;
        let mut rows = Vec::with_capacity(curve.len());
        let mut proxy: f64 = 0.0;
        for c in &curve {
            let m = c.moneyness;
            let reference = match oracle {
                Oracle::Model => c.price,
                _ if m == 0.0 => 0.0,
                _ if t == 0.0 => (m * p.alpha.iter().sum::<f64>() - 1.0).max(0.0),
                Oracle::BlackScholes => black_scholes_call(m, 1.0, p.sigma[0], p.r, t),
                Oracle::MertonSeries => {
                    merton_series_call(m, 1.0, p.sigma[0], p.r, t, p.lambda, p.mu_j[0], p.sigma_j[0], series_tol)?
                }
                Oracle::Qmc => {
                    let est = qmc_basket_call(&self.model, &vec![m; d], t, qmc)?;
                    proxy = proxy.max(est.error_proxy);
                    est.price
                }
            };
            rows.push(CompareRow { moneyness: m, model: c.price, oracle: reference, abs_err: (c.price - reference).abs() });
        }
        let n = rows.len().max(1) as f64;
        let max_abs_err = rows.iter().map(|r| r.abs_err).fold(0.0, f64::max);
        let mean_abs_err = rows.iter().map(|r| r.abs_err).sum::<f64>() / n;
        let oracle_error = match oracle {
            Oracle::Qmc => proxy,
            Oracle::MertonSeries => series_tol,
            Oracle::BlackScholes | Oracle::Model => 0.0,
        };
        let tolerance = self.manifest.config.oracle.compare_tolerance;
        Ok(Comparison { oracle, resolved_t: t, rows, max_abs_err, mean_abs_err, oracle_error, tolerance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub moneyness: f64,
    pub price: f64,
    /// Mollified lower bound at the projected point.
    pub intrinsic: f64,
    /// `price - intrinsic - linear extension`.
    pub time_value: f64,
    pub resolved_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Oracle {
    MertonSeries,
    BlackScholes,
    Qmc,
    /// The run itself; every error is zero.
    Model,
}

impl Oracle {
    pub fn name(self) -> &'static str {
        match self {
            Oracle::MertonSeries => "merton-series",
            Oracle::BlackScholes => "black-scholes",
            Oracle::Qmc => "qmc",
            Oracle::Model => "model",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Oracle::MertonSeries, Oracle::BlackScholes, Oracle::Qmc, Oracle::Model]
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::config("oracle", format!("unknown oracle {s:?}; expected merton-series, black-scholes, qmc or model")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub moneyness: f64,
    pub model: f64,
    pub oracle: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub oracle: Oracle,
    pub resolved_t: f64,
    pub rows: Vec<CompareRow>,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    /// Largest QMC replicate standard deviation, or the series truncation tolerance.
    pub oracle_error: f64,
    pub tolerance: f64,
}

impl Comparison {
    pub fn within_tolerance(&self) -> bool {
        self.max_abs_err <= self.tolerance
    }
}

/// Parses `min:max:steps` into `steps` evenly spaced values including both ends.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::config("grid", format!("expected min:max:steps, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo || (n == 1 && hi != lo) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect())
}

/// Formats a value with 17 significant digits, which parses back exactly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
