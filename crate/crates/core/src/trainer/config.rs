//! Runtime configuration of a solve.

use serde::{Deserialize, Serialize};

use crate::ann::NetworkShape;
use crate::error::{Error, Result};
use crate::geometry::{MollifierParams, TruncationRegion};
use crate::imex::bdf_coefficients;
use crate::quadrature::{RuleSpec, SurrogateConfig};

/// How the jump integral of previous snapshots is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegralMethod {
    GaussHermite(RuleSpec),
    Surrogate(SurrogateConfig),
}

/// Estimator of the Dirichlet energy `1/4 |B^T grad U|^2 + 1/2 r U^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    /// `d` tangents along the columns of `B(x)`.
    Exact,
    /// Rademacher probes `B(x) xi`, averaged.
    Hutchinson,
}

/// Smooth bump `eps exp(-(m - 1)^2 / (2 zeta^2))` fitted at `t = 0`, with
/// `zeta = zeta_itm` for `m > 1` and `zeta_otm` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BumpParams {
    pub epsilon: f64,
    pub zeta_itm: f64,
    pub zeta_otm: f64,
}

impl Default for BumpParams {
    fn default() -> Self {
        Self { epsilon: 0.05, zeta_itm: 0.5, zeta_otm: 0.25 }
    }
}

impl BumpParams {
    pub fn value(&self, m: f64) -> f64 {
        let zeta = if m > 1.0 { self.zeta_itm } else { self.zeta_otm };
        self.epsilon * (-(m - 1.0).powi(2) / (2.0 * zeta * zeta)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// BDF order.
    pub order: usize,
    pub tau: f64,
    pub maturity: f64,
    pub shape: NetworkShape,
    pub region: TruncationRegion<f64>,
    pub mollifier: MollifierParams,
    pub integral: IntegralMethod,
    pub learning_rate: f64,
    pub epochs_init: usize,
    pub epochs_first: usize,
    pub epochs_step: usize,
    pub samples_per_epoch: usize,
    pub init_samples: usize,
    /// Rows per backward pass inside an epoch.
    pub batch: usize,
    pub seed: u64,
    pub bump: BumpParams,
    pub energy: EnergyMode,
    pub energy_probes: usize,
    /// Explicit Neumann flux `a grad U . n` of the previous snapshots on the
    /// faces `x_i = x_max`.
    pub boundary_flux: bool,
    /// Points per face for the flux term (a single point when `d = 1`).
    pub face_samples: usize,
    /// Print per-step progress to stderr.
    pub progress: bool,
}

impl SolveConfig {
    /// Number of timesteps `T / tau`.
    pub fn steps(&self) -> usize {
        (self.maturity / self.tau).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        bdf_coefficients(self.order).map_err(|_| Error::config("scheme.order", "must be 1 or 2"))?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("scheme.tau", "must be positive"));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::config("scheme.maturity", "must be positive"));
        }
        let n = self.maturity / self.tau;
        if n.round() < 1.0 || (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config("scheme.tau", format!("must divide the maturity {} evenly", self.maturity)));
        }
        if self.shape.d != self.region.dim() {
            return Err(Error::config("network", "input dimension differs from the number of assets"));
        }
        self.mollifier.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate", "must be positive"));
        }
        let positive = [
            ("training.epochs_init", self.epochs_init),
            ("training.epochs_first", self.epochs_first),
            ("training.epochs_step", self.epochs_step),
            ("training.samples_per_epoch", self.samples_per_epoch),
            ("training.init_samples", self.init_samples),
            ("training.batch", self.batch),
            ("training.energy_probes", self.energy_probes),
            ("training.face_samples", self.face_samples),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        let b = &self.bump;
        if !(b.epsilon > 0.0 && b.zeta_itm > 0.0 && b.zeta_otm > 0.0) {
            return Err(Error::config("training.bump", "epsilon and both widths must be positive"));
        }
        if let IntegralMethod::Surrogate(s) = &self.integral {
            s.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base() -> SolveConfig {
        SolveConfig {
            order: 1,
            tau: 0.02,
            maturity: 1.0,
            shape: NetworkShape::new(1, 2, 32).unwrap(),
            region: TruncationRegion::new(4.0, 3.0, vec![1.0]).unwrap(),
            mollifier: MollifierParams::default(),
            integral: IntegralMethod::GaussHermite(RuleSpec::default()),
            learning_rate: 3e-4,
            epochs_init: 10,
            epochs_first: 10,
            epochs_step: 10,
            samples_per_epoch: 64,
            init_samples: 64,
            batch: 512,
            seed: 1,
            bump: BumpParams::default(),
            energy: EnergyMode::Exact,
            energy_probes: 1,
            boundary_flux: true,
            face_samples: 16,
            progress: false,
        }
    }

    #[test]
    fn bump_peaks_at_the_money() {
        let b = BumpParams::default();
        assert_eq!(b.value(1.0), 0.05);
        assert!(b.value(1.5) > b.value(0.5));
    }

    #[test]
    fn step_count_and_divisibility() {
        let c = base();
        assert_eq!(c.steps(), 50);
        c.validate().unwrap();
        let bad = SolveConfig { tau: 0.03, ..base() };
        match bad.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "scheme.tau"),
            other => panic!("{other:?}"),
        }
        let one = SolveConfig { tau: 1.0, ..base() };
        assert_eq!(one.steps(), 1);
        assert!(SolveConfig { order: 3, ..base() }.validate().is_err());
        assert!(SolveConfig { epochs_step: 0, ..base() }.validate().is_err());
    }
}
