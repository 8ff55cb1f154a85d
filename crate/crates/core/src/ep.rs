//! Equilibrium propagation.
//!
//! A free phase relaxes the network with the inputs applied; a nudge phase
//! then couples each output node to its target through a conductance `β`
//! and relaxes again from the free state. The contrast of squared branch
//! voltages between the two states estimates the gradient of the cost
//! `C = Σ_k (v_k^out - y_k)²` with respect to every conductance.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DrnError, Result};
use crate::model::{DrnParams, DrnState};
use crate::solver::{self, EnergyTracking, Nudge, RelaxReport, SolverConfig, UpdateMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpConfig {
    pub beta: f64,
    /// One rate per coupling matrix, in depth order.
    pub lr: Vec<f64>,
    pub momentum: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub t_inference: usize,
    pub t_nudge: usize,
}

impl EpConfig {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(DrnError::param(format!("beta must be positive, got {}", self.beta)));
        }
        if self.lr.len() != num_layers {
            return Err(DrnError::param(format!(
                "{} learning rates for {num_layers} coupling matrices",
                self.lr.len()
            )));
        }
        if !self.lr.iter().all(|&l| l >= 0.0 && l.is_finite()) {
            return Err(DrnError::param(format!("learning rates must be >= 0, got {:?}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(DrnError::param(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(DrnError::param(format!("lr decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.batch_size == 0 || self.t_inference == 0 || self.t_nudge == 0 {
            return Err(DrnError::param("batch size and iteration counts must be positive"));
        }
        Ok(())
    }
}

/// Desired output potentials, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub y: Array2<f64>,
}

impl Targets {
    pub fn new(y: Array2<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DrnError::NonFinite("targets".into()));
        }
        Ok(Targets { y })
    }

    /// `y_k = 1` for the labelled class and `0` elsewhere.
    pub fn one_hot(labels: &[u8], classes: usize) -> Result<Self> {
        let mut y = Array2::zeros((labels.len(), classes));
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= classes {
                return Err(DrnError::Dataset(format!("label {l} out of range for {classes} classes")));
            }
            y[[i, l as usize]] = 1.0;
        }
        Ok(Targets { y })
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }
}

/// `F = E + β C`, summed over the batch.
pub fn nudged_energy(params: &DrnParams, state: &DrnState, targets: &Targets, beta: f64) -> f64 {
    let nudge = Nudge { targets: targets.view(), beta };
    solver::nudged_energies(params, state, Some(&nudge)).sum()
}

/// Nudge phase: relaxes `F(·, β)` warm-started from `free`.
pub fn nudged_solve(
    params: &DrnParams,
    free: &DrnState,
    targets: &Targets,
    beta: f64,
    cfg: &SolverConfig,
) -> Result<(DrnState, RelaxReport)> {
    let mut state = free.clone();
    let report = nudged_relax(params, &mut state, targets, beta, cfg, None)?;
    Ok((state, report))
}

fn nudged_relax(
    params: &DrnParams,
    state: &mut DrnState,
    targets: &Targets,
    beta: f64,
    cfg: &SolverConfig,
    drive: Option<&Array2<f64>>,
) -> Result<RelaxReport> {
    if cfg.mode != UpdateMode::VcvsInput {
        return Err(DrnError::param("the nudge phase is defined for the input-VCVS network"));
    }
    let nudge = Nudge { targets: targets.view(), beta };
    solver::relax_with_drive(params, state, Some(&nudge), cfg, drive)
}

/// Gradient estimates for every conductance, batch-averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct EpGradient {
    pub couplings: Vec<Array2<f64>>,
    pub leaks: Vec<Array1<f64>>,
}

/// `(1/β) [ (v_j^β - v_k^β)² - (v_j^0 - v_k^0)² ]` per coupling and
/// `(1/β) [ (v_k^β)² - (v_k^0)² ]` per leak, averaged over the batch.
/// Entries of pinned columns are zero.
pub fn ep_gradient(params: &DrnParams, free: &DrnState, nudged: &DrnState, beta: f64) -> Result<EpGradient> {
    if !(beta != 0.0 && beta.is_finite()) {
        return Err(DrnError::param(format!("beta must be nonzero and finite, got {beta}")));
    }
    free.matches(params)?;
    nudged.matches(params)?;
    if free.batch_size() != nudged.batch_size() {
        return Err(DrnError::dim("free and nudged states have different batch sizes"));
    }
    let scale = 1.0 / (beta * free.batch_size() as f64);
    let num_layers = params.num_layers();
    // With d = v^β - v^0 and m = v^β + v^0 the contrast of a branch j→k is
    // (d_j - d_k)(m_j - m_k), which keeps the small difference exact.
    let diffs: Vec<Array2<f64>> = (0..=num_layers).map(|l| &nudged.layer(l) - &free.layer(l)).collect();
    let sums: Vec<Array2<f64>> = (0..=num_layers).map(|l| &nudged.layer(l) + &free.layer(l)).collect();
    let self_terms: Vec<Array1<f64>> =
        (0..=num_layers).map(|l| (&diffs[l] * &sums[l]).sum_axis(Axis(0))).collect();

    let mut couplings = Vec::with_capacity(num_layers);
    let mut leaks = Vec::with_capacity(num_layers);
    for l in 1..=num_layers {
        let (dp, mp) = (&diffs[l - 1], &sums[l - 1]);
        let (dc, mc) = (&diffs[l], &sums[l]);
        let mut cross = mp.t().dot(dc);
        if dp.iter().any(|&d| d != 0.0) {
            cross += &dp.t().dot(mc);
        }
        let rows = &self_terms[l - 1];
        let cols = &self_terms[l];
        let mut g = Array2::zeros((params.widths()[l - 1], params.widths()[l]));
        for ((j, k), out) in g.indexed_iter_mut() {
            *out = scale * (rows[j] + cols[k] - cross[[j, k]]);
        }
        let mut leak = cols.mapv(|t| scale * t);
        for (k, pol) in params.layout()[l].iter().enumerate() {
            if pol.is_pinned() {
                g.column_mut(k).fill(0.0);
                leak[k] = 0.0;
            }
        }
        couplings.push(g);
        leaks.push(leak);
    }
    Ok(EpGradient { couplings, leaks })
}

/// Per-layer mean, population standard deviation and maximum of a coupling
/// matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductanceStats {
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

pub fn conductance_stats(params: &DrnParams) -> Vec<ConductanceStats> {
    (1..=params.num_layers())
        .map(|layer| {
            let (mean, std, max) = matrix_stats(params.coupling(layer));
            ConductanceStats { layer, mean, std, max }
        })
        .collect()
}

/// `(mean, population std, max)` of a non-negative matrix; zeros when empty.
pub fn matrix_stats(g: ArrayView2<'_, f64>) -> (f64, f64, f64) {
    if g.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = g.len() as f64;
    let mean = g.sum() / n;
    let var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let max = g.iter().cloned().fold(0.0, f64::max);
    (mean, var.sqrt(), max)
}

/// Per-epoch training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Fraction of misclassified training examples in the free phase.
    pub train_err: f64,
    /// Mean free-phase energy per training example.
    pub mean_energy: f64,
    /// Learning rates used during the epoch.
    pub lr: Vec<f64>,
    /// Largest energy increase of any layer update (should be <= 0).
    pub max_energy_increase: f64,
    /// Largest energy of a training example seen during relaxation.
    pub energy_scale: f64,
    /// Largest last-sweep potential change in any free phase.
    pub max_last_delta: f64,
}

/// Result of one minibatch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub errors: usize,
    pub energy_sum: f64,
    pub max_energy_increase: f64,
    pub energy_scale: f64,
    pub last_delta: f64,
}

/// Momentum SGD on conductances with non-negativity clipping.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: DrnParams,
    cfg: EpConfig,
    lr: Vec<f64>,
    velocity: Vec<Array2<f64>>,
    leak_velocity: Vec<Array1<f64>>,
    epoch: usize,
}

pub(crate) fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

impl Trainer {
    pub fn new(params: DrnParams, cfg: EpConfig) -> Result<Self> {
        cfg.validate(params.num_layers())?;
        let velocity = (1..=params.num_layers()).map(|l| Array2::zeros(params.coupling(l).dim())).collect();
        let leak_velocity = (1..=params.num_layers()).map(|l| Array1::zeros(params.widths()[l])).collect();
        Ok(Trainer { lr: cfg.lr.clone(), params, cfg, velocity, leak_velocity, epoch: 0 })
    }

    pub fn params(&self) -> &DrnParams {
        &self.params
    }

    pub fn into_params(self) -> DrnParams {
        self.params
    }

    pub fn config(&self) -> &EpConfig {
        &self.cfg
    }

    /// Current learning rates (after decay).
    pub fn learning_rates(&self) -> &[f64] {
        &self.lr
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn solver_cfg(iterations: usize) -> SolverConfig {
        SolverConfig::fixed(iterations).with_energy_tracking(EnergyTracking::Incremental)
    }

    /// One free phase, nudge phase and optimizer step on a minibatch of
    /// raw inputs.
    pub fn step(&mut self, xs: ArrayView2<'_, f64>, labels: &[u8]) -> Result<StepOutcome> {
        let targets = Targets::one_hot(labels, self.params.output_dim())?;
        let mut free = DrnState::initial(&self.params, xs)?;
        let drive = free.layer(0).dot(&self.params.coupling(1));
        let free_report =
            solver::relax_with_drive(&self.params, &mut free, None, &Self::solver_cfg(self.cfg.t_inference), Some(&drive))?;
        let energies = solver::energies_expanded(&self.params, &free, Some(&drive));
        let errors = free
            .output()
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &l)| argmax(*row) != l as usize)
            .count();
        let mut nudged = free.clone();
        let nudge_report = nudged_relax(
            &self.params,
            &mut nudged,
            &targets,
            self.cfg.beta,
            &Self::solver_cfg(self.cfg.t_nudge),
            Some(&drive),
        )?;
        let grad = ep_gradient(&self.params, &free, &nudged, self.cfg.beta)?;
        self.apply(&grad);
        Ok(StepOutcome {
            errors,
            energy_sum: energies.sum(),
            max_energy_increase: free_report.max_energy_increase.max(nudge_report.max_energy_increase),
            energy_scale: free_report.energy_scale.max(nudge_report.energy_scale),
            last_delta: free_report.last_delta,
        })
    }

    /// `m ← μ m + ∇̂`, `g ← max(0, g - η m)`.
    pub fn apply(&mut self, grad: &EpGradient) {
        let mu = self.cfg.momentum;
        let leaks_enabled = self.params.leaks_enabled();
        for l in 1..=self.params.num_layers() {
            let eta = self.lr[l - 1];
            let m = &mut self.velocity[l - 1];
            m.zip_mut_with(&grad.couplings[l - 1], |m, &g| *m = mu * *m + g);
            let mut g = self.params.coupling_mut(l);
            g.zip_mut_with(m, |g, &m| *g = (*g - eta * m).max(0.0));
            if leaks_enabled {
                let m = &mut self.leak_velocity[l - 1];
                m.zip_mut_with(&grad.leaks[l - 1], |m, &g| *m = mu * *m + g);
                let leak = self.params.leak_mut(l);
                leak.zip_mut_with(m, |g, &m| *g = (*g - eta * m).max(0.0));
            }
        }
    }

    /// One pass over the data in an order drawn from `rng`, followed by the
    /// learning-rate decay.
    pub fn train_epoch(&mut self, images: ArrayView2<'_, f64>, labels: &[u8], rng: &mut ChaCha8Rng) -> Result<EpochMetrics> {
        if images.nrows() != labels.len() {
            return Err(DrnError::Dataset(format!(
                "{} images but {} labels",
                images.nrows(),
                labels.len()
            )));
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(rng);
        let lr = self.lr.clone();
        let mut errors = 0;
        let mut energy = 0.0;
        let mut max_increase = f64::NEG_INFINITY;
        let mut scale = 0.0f64;
        let mut max_delta = 0.0f64;
        let mut xs = Array2::zeros((0, images.ncols()));
        for (batch, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            if xs.nrows() != chunk.len() {
                xs = Array2::zeros((chunk.len(), images.ncols()));
            }
            for (row, &i) in chunk.iter().enumerate() {
                xs.row_mut(row).assign(&images.row(i));
            }
            let ys: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let out = self
                .step(xs.view(), &ys)
                .map_err(|e| DrnError::Batch { batch, source: Box::new(e) })?;
            errors += out.errors;
            energy += out.energy_sum;
            max_increase = max_increase.max(out.max_energy_increase);
            scale = scale.max(out.energy_scale);
            max_delta = max_delta.max(out.last_delta);
        }
        for l in self.lr.iter_mut() {
            *l *= self.cfg.lr_decay;
        }
        self.epoch += 1;
        let n = labels.len().max(1) as f64;
        Ok(EpochMetrics {
            epoch: self.epoch,
            train_err: errors as f64 / n,
            mean_energy: energy / n,
            lr,
            max_energy_increase: if labels.is_empty() { 0.0 } else { max_increase },
            energy_scale: scale,
            max_last_delta: max_delta,
        })
    }
}

/// Free-phase classification error and mean energy on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub error_rate: f64,
    pub mean_energy: f64,
    pub max_energy_increase: f64,
    pub energy_scale: f64,
}

pub fn evaluate(
    params: &DrnParams,
    images: ArrayView2<'_, f64>,
    labels: &[u8],
    iterations: usize,
    batch_size: usize,
) -> Result<Evaluation> {
    if images.nrows() != labels.len() {
        return Err(DrnError::Dataset(format!("{} images but {} labels", images.nrows(), labels.len())));
    }
    if batch_size == 0 {
        return Err(DrnError::param("batch size must be positive"));
    }
    let cfg = SolverConfig::fixed(iterations).with_energy_tracking(EnergyTracking::Incremental);
    let mut errors = 0;
    let mut energy = 0.0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    let mut start = 0;
    while start < labels.len() {
        let end = (start + batch_size).min(labels.len());
        let xs = images.slice(s![start..end, ..]);
        let mut state = DrnState::initial(params, xs)?;
        let drive = state.layer(0).dot(&params.coupling(1));
        let report = solver::relax_with_drive(params, &mut state, None, &cfg, Some(&drive))?;
        max_increase = max_increase.max(report.max_energy_increase);
        scale = scale.max(report.energy_scale);
        energy += solver::energies_expanded(params, &state, Some(&drive)).sum();
        errors += state
            .output()
            .rows()
            .into_iter()
            .zip(&labels[start..end])
            .filter(|(row, &l)| argmax(*row) != l as usize)
            .count();
        start = end;
    }
    let n = labels.len().max(1) as f64;
    Ok(Evaluation {
        error_rate: errors as f64 / n,
        mean_energy: energy / n,
        max_energy_increase: if labels.is_empty() { 0.0 } else { max_increase },
        energy_scale: scale,
    })
}
