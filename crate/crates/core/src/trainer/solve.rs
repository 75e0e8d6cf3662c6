//! The full solve: initial fit, then `T / tau` minimizing-movement steps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{IntegralMethod, SolveConfig};
use super::step::{advance_timestep, fit_initial_bump, StepEngine};
use crate::ann::checkpoint::Checkpoint;
use crate::ann::NetworkParams;
use crate::error::Result;
use crate::imex::{Snapshot, TimestepHistory};
use crate::market::{Coefficients, MertonModel};
use crate::quadrature::{fit_surrogate, IntegralSurrogate};
use crate::rng::{derive, label};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub holdout_rms: f64,
    pub warning: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub t: f64,
    pub order: usize,
    pub epochs: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub fresh_first_loss: f64,
    pub wall_seconds: f64,
    /// Surrogate fitted to this snapshot, when the surrogate quadrature is used.
    pub surrogate: Option<SurrogateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub init: InitReport,
    /// Surrogate fitted to the `t = 0` snapshot.
    pub init_surrogate: Option<SurrogateReport>,
    pub steps: Vec<StepReport>,
    pub wall_seconds: f64,
}

impl SolveReport {
    /// Fraction of steps whose warm-started first-epoch cost did not exceed
    /// that of a fresh initialization.
    pub fn warm_start_share(&self) -> f64 {
        if self.steps.is_empty() {
            return 1.0;
        }
        let wins = self.steps.iter().filter(|s| s.first_loss <= s.fresh_first_loss).count();
        wins as f64 / self.steps.len() as f64
    }
}

/// All snapshots `(k, t_k, theta^k)` for `k = 0..=n` and the run report.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub snapshots: Vec<Checkpoint<T>>,
    pub report: SolveReport,
}

impl<T: Real> Solution<T> {
    pub fn last(&self) -> &Checkpoint<T> {
        self.snapshots.last().expect("a solution holds at least the initial snapshot")
    }
}

/// Runs the solve. `sink` is called once per snapshot (including `k = 0`) with
/// the checkpoint and the surrogate fitted to it, if any.
pub fn solve<T: Real, S>(model: &MertonModel<f64>, cfg: &SolveConfig, mut sink: S) -> Result<Solution<T>>
where
    S: FnMut(&Checkpoint<T>, Option<&IntegralSurrogate<T>>) -> Result<()>,
{
    let started = Instant::now();
    let engine = StepEngine::<T>::new(model, cfg)?;
    let n = cfg.steps();

    let clock = Instant::now();
    let init = fit_initial_bump(&engine.head, cfg)?;
    let init_report = InitReport {
        epochs: cfg.epochs_init,
        final_loss: init.final_loss,
        holdout_rms: init.holdout_rms,
        warning: init.warning.clone(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    if cfg.progress {
        eprintln!("init: loss {:.3e}, holdout rms {:.3e} ({:.1}s)", init.final_loss, init.holdout_rms, init_report.wall_seconds);
        if let Some(w) = &init.warning {
            eprintln!("warning: {w}");
        }
    }

    let mut history = TimestepHistory::new(cfg.order, cfg.tau)?;
    let mut snapshots = Vec::with_capacity(n + 1);
    let mut steps = Vec::with_capacity(n);

    let (surrogate, init_surrogate) = fit_for(&engine, model, &init.params, 0, 0.0, None, n > 0)?;
    let first = Checkpoint { k: 0, t: 0.0, params: init.params };
    sink(&first, surrogate.as_ref())?;
    history.push(Snapshot { k: 0, t: 0.0, params: first.params.clone(), surrogate })?;
    snapshots.push(first);

    for k in 1..=n {
        let clock = Instant::now();
        let newest = history.newest().expect("history holds the previous snapshot");
        let step = advance_timestep(&engine, &history, &newest.params)?;
        let t = k as f64 * cfg.tau;
        let warm_surrogate = newest.surrogate.as_ref().map(|s| s.params.clone());
        let (surrogate, surrogate_report) = fit_for(&engine, model, &step.params, k, t, warm_surrogate.as_ref(), k < n)?;
        let report = StepReport {
            k,
            t,
            order: step.order,
            epochs: step.epochs,
            first_loss: step.first_loss,
            final_loss: step.final_loss,
            fresh_first_loss: step.fresh_first_loss,
            wall_seconds: clock.elapsed().as_secs_f64(),
            surrogate: surrogate_report,
        };
        if cfg.progress {
            eprintln!(
                "step {k}/{n} t={t:.4} order {}: cost {:.6e} -> {:.6e} ({:.1}s)",
                report.order, report.first_loss, report.final_loss, report.wall_seconds
            );
        }
        let cp = Checkpoint { k, t, params: step.params };
        sink(&cp, surrogate.as_ref())?;
        history.push(Snapshot { k, t, params: cp.params.clone(), surrogate })?;
        snapshots.push(cp);
        steps.push(report);
    }

    Ok(Solution {
        snapshots,
        report: SolveReport { init: init_report, init_surrogate, steps, wall_seconds: started.elapsed().as_secs_f64() },
    })
}

/// Fits the integral surrogate of snapshot `k` when the surrogate quadrature
/// is configured and a later step will use it.
fn fit_for<T: Real>(
    engine: &StepEngine<T>,
    model: &MertonModel<f64>,
    params: &NetworkParams<T>,
    k: usize,
    t: f64,
    warm: Option<&NetworkParams<T>>,
    needed: bool,
) -> Result<(Option<IntegralSurrogate<T>>, Option<SurrogateReport>)> {
    let IntegralMethod::Surrogate(scfg) = &engine.cfg.integral else { return Ok((None, None)) };
    if !needed {
        return Ok((None, None));
    }
    let clock = Instant::now();
    let alpha = engine.cfg.region.alpha.clone();
    let fit = fit_surrogate(
        |xs| engine.snapshot_values(params, k, t, xs),
        model.jump_law(),
        engine.cfg.region.x_max,
        scfg,
        Some(&alpha),
        warm,
        derive(engine.cfg.seed, &[label::SURROGATE, k as u64]),
    )?;
    let report = SurrogateReport { epochs: fit.epochs, final_loss: fit.final_loss, wall_seconds: clock.elapsed().as_secs_f64() };
    if engine.cfg.progress {
        eprintln!("surrogate {k}: loss {:.3e} after {} epochs ({:.1}s)", fit.final_loss, fit.epochs, report.wall_seconds);
    }
    Ok((Some(fit), Some(report)))
}
