//! Steady-state computation by exact block coordinate descent.
//!
//! Layers are swept from the first hidden layer to the output. Within a
//! layer all units are updated at once: units of the same layer share no
//! resistor, so the layer is a separable block of the energy and its exact
//! minimizer is the clipped conductance-weighted mean
//!
//! ```text
//! p_k = (Σ_j g_jk^(ℓ) v_j^(ℓ-1) + Σ_j g_kj^(ℓ+1) v_j^(ℓ+1)) / (g_k + Σ_j g_jk^(ℓ) + Σ_j g_kj^(ℓ+1))
//! ```
//!
//! followed by `max(0, ·)` for excitatory and `min(0, ·)` for inhibitory
//! units. Pinned nodes (inputs and bias pairs) are never touched.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DrnError, Result};
use crate::model::{DrnParams, DrnState, UnitPolarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Inputs amplified once by the input VCVSs.
    VcvsInput,
    /// Every unit sits behind a bidirectional amplifier of gain `a^(ℓ)`.
    BidirectionalAmplifier,
}

/// How (and whether) energy is monitored during relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyTracking {
    Off,
    /// Exact energy change of the updated block, from the block quadratic.
    Incremental,
    /// Full [`energy`] (plus nudge cost) before and after every layer update.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of sweeps `T`, or the sweep budget when `tol` is set.
    pub iterations: usize,
    /// Early stop once a full sweep changes no potential by `tol` or more.
    /// Running out of sweeps is then an error.
    pub tol: Option<f64>,
    pub mode: UpdateMode,
    pub energy_tracking: EnergyTracking,
}

impl SolverConfig {
    pub fn fixed(iterations: usize) -> Self {
        SolverConfig {
            iterations,
            tol: None,
            mode: UpdateMode::VcvsInput,
            energy_tracking: EnergyTracking::Off,
        }
    }

    pub fn converged(tol: f64, max_iterations: usize) -> Self {
        SolverConfig { tol: Some(tol), ..SolverConfig::fixed(max_iterations) }
    }

    pub fn with_mode(self, mode: UpdateMode) -> Self {
        SolverConfig { mode, ..self }
    }

    pub fn with_energy_tracking(self, energy_tracking: EnergyTracking) -> Self {
        SolverConfig { energy_tracking, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(DrnError::param("solver needs at least one iteration"));
        }
        if let Some(tol) = self.tol {
            if !(tol >= 0.0) {
                return Err(DrnError::param(format!("tolerance must be non-negative, got {tol}")));
            }
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::converged(1e-10, 100_000)
    }
}

/// Output-node coupling to target potentials with conductance `beta`.
#[derive(Debug, Clone, Copy)]
pub struct Nudge<'a> {
    pub targets: ArrayView2<'a, f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelaxReport {
    pub iterations: usize,
    /// Largest potential change during the last sweep.
    pub last_delta: f64,
    pub converged: bool,
    /// Largest energy increase of a single layer update on any batch row
    /// (zero or negative means monotone). Only set when tracking is on.
    pub max_energy_increase: f64,
    /// Size of the energies involved, for judging `max_energy_increase`
    /// against rounding: the largest (nudged) row energy under direct
    /// tracking, the largest row magnitude of the updated block's energy
    /// terms under incremental tracking.
    pub energy_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateCert {
    /// Largest complementarity/KCL violation over hidden and output nodes,
    /// in volts (current imbalance divided by total nodal conductance).
    pub kcl_residual_max: f64,
    pub diode_feasibility: bool,
    /// Energy summed over the batch.
    pub energy_value: f64,
    pub iterations: usize,
    pub last_delta: f64,
}

fn amplifier(params: &DrnParams, mode: UpdateMode, layer: usize) -> Result<f64> {
    match mode {
        UpdateMode::VcvsInput => Ok(1.0),
        UpdateMode::BidirectionalAmplifier => params
            .amplifier_gains()
            .map(|a| a[layer - 1])
            .ok_or_else(|| DrnError::param("bidirectional mode needs amplifier gains")),
    }
}

/// Numerator of the layer quotient for every node of `layer`.
fn numerators(
    params: &DrnParams,
    state: &DrnState,
    layer: usize,
    mode: UpdateMode,
    forward: Option<&Array2<f64>>,
    nudge: Option<&Nudge<'_>>,
) -> Result<Array2<f64>> {
    let mut num = match forward {
        Some(f) => f.clone(),
        None => state.layer(layer - 1).dot(&params.coupling(layer)),
    };
    let a = amplifier(params, mode, layer)?;
    if a != 1.0 {
        num *= a;
    }
    if layer < params.num_layers() {
        let backward = state.layer(layer + 1).dot(&params.coupling(layer + 1).t());
        let a_next = amplifier(params, mode, layer + 1)?;
        if a_next != 1.0 {
            num.scaled_add(1.0 / a_next, &backward);
        } else {
            num += &backward;
        }
    } else if let Some(n) = nudge {
        num.scaled_add(n.beta, &n.targets);
    }
    Ok(num)
}

/// Applies one block update given numerators and denominators. Returns
/// `(max |Δv|, max per-row energy change)`.
fn apply_block(
    params: &DrnParams,
    state: &mut DrnState,
    layer: usize,
    num: &Array2<f64>,
    den: &Array1<f64>,
    track_increment: bool,
) -> BlockOutcome {
    let polarity = &params.layout()[layer];
    let mut out = BlockOutcome { max_delta: 0.0, max_increase: f64::NEG_INFINITY, scale: 0.0 };
    let mut v = state.layer_mut(layer);
    for (mut row, num_row) in v.rows_mut().into_iter().zip(num.rows()) {
        let mut row_change = 0.0;
        let mut row_scale = 0.0;
        for (k, pol) in polarity.iter().enumerate() {
            if pol.is_pinned() {
                continue;
            }
            let old = row[k];
            let new = pol.clip(num_row[k] / den[k]);
            row[k] = new;
            let delta = new - old;
            out.max_delta = out.max_delta.max(delta.abs());
            if track_increment {
                // E_block(v) = den v² - 2 num v + const
                row_change += delta * (den[k] * (new + old) - 2.0 * num_row[k]);
                row_scale += den[k] * (new * new + old * old) + 2.0 * num_row[k].abs() * (new.abs() + old.abs());
            }
        }
        out.max_increase = out.max_increase.max(row_change);
        out.scale = out.scale.max(row_scale);
    }
    out
}

struct BlockOutcome {
    max_delta: f64,
    /// Largest per-row energy change.
    max_increase: f64,
    /// Largest per-row magnitude of the energy terms involved.
    scale: f64,
}

fn denominators(params: &DrnParams, layer: usize, nudge: Option<&Nudge<'_>>) -> Array1<f64> {
    let mut den = params.denominators(layer);
    if layer == params.num_layers() {
        if let Some(n) = nudge {
            den += n.beta;
        }
    }
    den
}

fn check_den(params: &DrnParams, layer: usize, den: &Array1<f64>) -> Result<()> {
    for (k, pol) in params.layout()[layer].iter().enumerate() {
        if !pol.is_pinned() && !(den[k] > 0.0) {
            return Err(DrnError::IsolatedNode { layer, unit: k });
        }
    }
    Ok(())
}

fn single_update(params: &DrnParams, state: &mut DrnState, layer: usize, mode: UpdateMode) -> Result<f64> {
    state.matches(params)?;
    if layer == 0 || layer > params.num_layers() {
        return Err(DrnError::param(format!(
            "layer {layer} is not updatable (valid: 1..={})",
            params.num_layers()
        )));
    }
    let den = denominators(params, layer, None);
    check_den(params, layer, &den)?;
    let num = numerators(params, state, layer, mode, None, None)?;
    Ok(apply_block(params, state, layer, &num, &den, false).max_delta)
}

/// One exact block update of `layer` (conductance-weighted quotient with diode
/// clipping). Returns the largest potential change.
pub fn layer_update(params: &DrnParams, state: &mut DrnState, layer: usize) -> Result<f64> {
    single_update(params, state, layer, UpdateMode::VcvsInput)
}

/// Block update with bidirectional amplifiers: forward terms see
/// `a^(ℓ) v_j^(ℓ-1)`, backward terms see `v_j^(ℓ+1) / a^(ℓ+1)`.
pub fn amplified_layer_update(params: &DrnParams, state: &mut DrnState, layer: usize) -> Result<f64> {
    single_update(params, state, layer, UpdateMode::BidirectionalAmplifier)
}

/// Runs block coordinate descent on `state` in place, starting from its
/// current potentials (warm start).
pub fn relax(
    params: &DrnParams,
    state: &mut DrnState,
    nudge: Option<&Nudge<'_>>,
    cfg: &SolverConfig,
) -> Result<RelaxReport> {
    relax_with_drive(params, state, nudge, cfg, None)
}

/// [`relax`] with a precomputed `v^(0) g^(1)` (valid because the input layer
/// never changes).
pub(crate) fn relax_with_drive(
    params: &DrnParams,
    state: &mut DrnState,
    nudge: Option<&Nudge<'_>>,
    cfg: &SolverConfig,
    drive: Option<&Array2<f64>>,
) -> Result<RelaxReport> {
    cfg.check()?;
    state.matches(params)?;
    let num_layers = params.num_layers();
    if let Some(n) = nudge {
        if n.targets.dim() != state.output().dim() {
            return Err(DrnError::dim(format!(
                "targets have shape {:?}, outputs {:?}",
                n.targets.dim(),
                state.output().dim()
            )));
        }
        if !(n.beta >= 0.0 && n.beta.is_finite()) {
            return Err(DrnError::param(format!("nudging parameter must be >= 0, got {}", n.beta)));
        }
    }
    let dens: Vec<Array1<f64>> = (1..=num_layers).map(|l| denominators(params, l, nudge)).collect();
    for (l, den) in dens.iter().enumerate() {
        check_den(params, l + 1, den)?;
    }
    // The input layer is pinned, so its drive into layer 1 is loop-invariant.
    let owned;
    let drive = match drive {
        Some(d) => d,
        None => {
            owned = state.layer(0).dot(&params.coupling(1));
            &owned
        }
    };

    let tracking = cfg.energy_tracking;
    let mut report = RelaxReport { max_energy_increase: f64::NEG_INFINITY, ..RelaxReport::default() };
    let mut energy_before = match tracking {
        EnergyTracking::Direct => {
            let e = nudged_energies(params, state, nudge);
            report.energy_scale = e.iter().cloned().fold(0.0, f64::max);
            Some(e)
        }
        _ => None,
    };

    for iteration in 1..=cfg.iterations {
        let mut sweep_delta = 0.0f64;
        for layer in 1..=num_layers {
            let forward = (layer == 1).then_some(drive);
            let num = numerators(params, state, layer, cfg.mode, forward, nudge)?;
            let incremental = tracking == EnergyTracking::Incremental;
            let block = apply_block(params, state, layer, &num, &dens[layer - 1], incremental);
            let delta = block.max_delta;
            if !delta.is_finite() || state.layer(layer).iter().any(|v| !v.is_finite()) {
                return Err(DrnError::NumericFailure { layer, iteration });
            }
            sweep_delta = sweep_delta.max(delta);
            match tracking {
                EnergyTracking::Off => {}
                EnergyTracking::Incremental => {
                    report.max_energy_increase = report.max_energy_increase.max(block.max_increase);
                    report.energy_scale = report.energy_scale.max(block.scale);
                }
                EnergyTracking::Direct => {
                    let after = nudged_energies(params, state, nudge);
                    let before = energy_before.as_ref().expect("set when tracking directly");
                    for (a, b) in after.iter().zip(before) {
                        report.max_energy_increase = report.max_energy_increase.max(a - b);
                        report.energy_scale = report.energy_scale.max(*a);
                    }
                    energy_before = Some(after);
                }
            }
        }
        report.iterations = iteration;
        report.last_delta = sweep_delta;
        if let Some(tol) = cfg.tol {
            if sweep_delta < tol {
                report.converged = true;
                break;
            }
        }
    }
    if tracking == EnergyTracking::Off {
        report.max_energy_increase = 0.0;
    }
    if let Some(tol) = cfg.tol {
        if !report.converged {
            return Err(DrnError::NotConverged {
                iterations: report.iterations,
                last_delta: report.last_delta.max(tol),
            });
        }
    }
    Ok(report)
}

/// Encodes `xs`, initializes hidden and output potentials to zero and
/// relaxes to steady state. The certificate is computed at the final state.
pub fn solve_steady_state(
    params: &DrnParams,
    xs: ArrayView2<'_, f64>,
    cfg: &SolverConfig,
) -> Result<(DrnState, SteadyStateCert)> {
    let mut state = DrnState::initial(params, xs)?;
    let report = relax(params, &mut state, None, cfg)?;
    let cert = certify(params, &state, cfg.mode, &report)?;
    Ok((state, cert))
}

pub(crate) fn certify(
    params: &DrnParams,
    state: &DrnState,
    mode: UpdateMode,
    report: &RelaxReport,
) -> Result<SteadyStateCert> {
    let kcl = kcl_residual_with(params, state, mode, None)?;
    let energy_value = energy(params, state);
    if !energy_value.is_finite() || !kcl.max_residual.is_finite() {
        return Err(DrnError::NumericFailure { layer: params.num_layers(), iteration: report.iterations });
    }
    Ok(SteadyStateCert {
        kcl_residual_max: kcl.max_residual,
        diode_feasibility: kcl.feasible,
        energy_value,
        iterations: report.iterations,
        last_delta: report.last_delta,
    })
}

/// Power dissipated by every resistor, per batch row:
/// `Σ_ℓ Σ_jk g_jk (v_j^(ℓ-1) - v_k^(ℓ))² + Σ_ℓ Σ_k g_k (v_k^(ℓ))²`.
pub fn energies(params: &DrnParams, state: &DrnState) -> Array1<f64> {
    let batch = state.batch_size();
    let mut total = Array1::zeros(batch);
    for l in 1..=params.num_layers() {
        let g = params.coupling(l);
        let leak = params.leak(l);
        let (prev, cur) = (state.layer(l - 1), state.layer(l));
        for b in 0..batch {
            let mut e = 0.0;
            for (k, &vk) in cur.row(b).iter().enumerate() {
                for (j, &vj) in prev.row(b).iter().enumerate() {
                    let gjk = g[[j, k]];
                    if gjk != 0.0 {
                        e += gjk * (vj - vk) * (vj - vk);
                    }
                }
                e += leak[k] * vk * vk;
            }
            total[b] += e;
        }
    }
    total
}

/// Same quantity as [`energies`] from the expanded quadratic
/// `Σ_j r_j v_j² + Σ_k c_k v_k² - 2 Σ_k v_k (v^(ℓ-1) g)_k`, using matrix
/// products. Faster on wide layers; loses relative accuracy when the
/// energy is much smaller than its terms.
pub(crate) fn energies_expanded(params: &DrnParams, state: &DrnState, drive: Option<&Array2<f64>>) -> Array1<f64> {
    let batch = state.batch_size();
    let mut total = Array1::zeros(batch);
    for l in 1..=params.num_layers() {
        let g = params.coupling(l);
        let (prev, cur) = (state.layer(l - 1), state.layer(l));
        let rows = g.sum_axis(Axis(1));
        let cols = &g.sum_axis(Axis(0)) + &params.leak(l);
        let owned;
        let forward = match (l, drive) {
            (1, Some(d)) => d,
            _ => {
                owned = prev.dot(&g);
                &owned
            }
        };
        for b in 0..batch {
            let p = prev.row(b);
            let c = cur.row(b);
            let mut e = 0.0;
            for (j, &v) in p.iter().enumerate() {
                e += rows[j] * v * v;
            }
            for (k, &v) in c.iter().enumerate() {
                e += cols[k] * v * v - 2.0 * v * forward[[b, k]];
            }
            total[b] += e;
        }
    }
    total
}

/// Total energy over the batch.
pub fn energy(params: &DrnParams, state: &DrnState) -> f64 {
    energies(params, state).sum()
}

/// `Σ_k (v_k^out - y_k)²` per batch row.
pub fn costs(state: &DrnState, targets: ArrayView2<'_, f64>) -> Array1<f64> {
    let diff = &state.output() - &targets;
    diff.mapv(|d| d * d).sum_axis(Axis(1))
}

pub(crate) fn nudged_energies(params: &DrnParams, state: &DrnState, nudge: Option<&Nudge<'_>>) -> Array1<f64> {
    let mut e = energies(params, state);
    if let Some(n) = nudge {
        e.scaled_add(n.beta, &costs(state, n.targets));
    }
    e
}

#[derive(Debug, Clone)]
pub struct KclReport {
    /// Per layer `1..=L` (index `ℓ-1`), `batch × N_ℓ` relative violations.
    pub residuals: Vec<Array2<f64>>,
    /// Inferred forward current of each hidden unit's diode: the current it
    /// supplies to an excitatory node or absorbs from an inhibitory one.
    /// Non-negative at a legal state; zero for linear and pinned nodes.
    pub diode_currents: Vec<Array2<f64>>,
    pub max_residual: f64,
    /// Every excitatory potential is `>= 0` and every inhibitory one `<= 0`.
    pub feasible: bool,
}

/// Kirchhoff current balance at every hidden and output node, from explicit
/// branch currents.
///
/// The diode current is whatever balances the resistor currents. An ideal
/// diode conducts only forward and only with zero voltage across it, so
/// with forward current `i` the reported residual is the complementarity
/// violation `|min(G v, i)|` (excitatory), `|min(-G v, i)|` (inhibitory)
/// or the plain imbalance (linear), divided by the node's total
/// conductance `G`.
pub fn kcl_residual(params: &DrnParams, state: &DrnState) -> Result<KclReport> {
    kcl_residual_with(params, state, UpdateMode::VcvsInput, None)
}

pub fn kcl_residual_with(
    params: &DrnParams,
    state: &DrnState,
    mode: UpdateMode,
    nudge: Option<&Nudge<'_>>,
) -> Result<KclReport> {
    state.matches(params)?;
    let num_layers = params.num_layers();
    let batch = state.batch_size();
    let mut residuals = Vec::with_capacity(num_layers);
    let mut currents = Vec::with_capacity(num_layers);
    let mut max_residual = 0.0f64;
    let mut feasible = true;
    for l in 1..=num_layers {
        let width = params.widths()[l];
        let g_in = params.coupling(l);
        let leak = params.leak(l);
        let a = amplifier(params, mode, l)?;
        let a_next = if l < num_layers { amplifier(params, mode, l + 1)? } else { 1.0 };
        let den = denominators(params, l, nudge);
        let mut res = Array2::zeros((batch, width));
        let mut cur = Array2::zeros((batch, width));
        for b in 0..batch {
            let prev = state.layer(l - 1);
            let here = state.layer(l);
            for k in 0..width {
                let pol = params.polarity(l, k);
                if pol.is_pinned() {
                    continue;
                }
                let vk = here[[b, k]];
                // Net resistive current flowing into node k.
                let mut inflow = -leak[k] * vk;
                for j in 0..prev.ncols() {
                    inflow += g_in[[j, k]] * (a * prev[[b, j]] - vk);
                }
                if l < num_layers {
                    let g_out = params.coupling(l + 1);
                    let next = state.layer(l + 1);
                    for j in 0..next.ncols() {
                        inflow += g_out[[k, j]] * (next[[b, j]] / a_next - vk);
                    }
                } else if let Some(n) = nudge {
                    inflow += n.beta * (n.targets[[b, k]] - vk);
                }
                // Forward current of the diode and the (scaled) reverse
                // voltage across it; both must be >= 0 with product 0.
                let (forward, reverse) = match pol {
                    UnitPolarity::Excitatory => {
                        feasible &= vk >= 0.0;
                        (-inflow, den[k] * vk)
                    }
                    UnitPolarity::Inhibitory => {
                        feasible &= vk <= 0.0;
                        (inflow, -den[k] * vk)
                    }
                    _ => (inflow, 0.0),
                };
                let violation = match pol {
                    UnitPolarity::Excitatory | UnitPolarity::Inhibitory => {
                        cur[[b, k]] = forward;
                        reverse.min(forward).abs()
                    }
                    _ => inflow.abs(),
                };
                let r = violation / den[k];
                res[[b, k]] = r;
                max_residual = max_residual.max(r);
            }
        }
        residuals.push(res);
        currents.push(cur);
    }
    Ok(KclReport { residuals, diode_currents: currents, max_residual, feasible })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleReport {
    pub pass: bool,
    /// `v_max^(ℓ)` over the batch, `ℓ = 0..=L` (bias nodes excluded).
    pub v_max: Vec<f64>,
}

const MAX_PRINCIPLE_SLACK: f64 = 1e-9;

fn layer_amplitudes(params: &DrnParams, state: &DrnState) -> Array2<f64> {
    let num_layers = params.num_layers();
    let batch = state.batch_size();
    let mut amp = Array2::zeros((batch, num_layers + 1));
    for l in 0..=num_layers {
        let first = if l < num_layers { 2 } else { 0 };
        let v = state.layer(l);
        for b in 0..batch {
            amp[[b, l]] = v.row(b).iter().skip(first).fold(0.0f64, |m, x| m.max(x.abs()));
        }
    }
    amp
}

/// Checks the layerwise maximum principle
/// `v_max^(ℓ) <= max(v_max^(ℓ-1), A^(ℓ-1), …, A^(L-1))` and the global bound
/// by input and bias amplitudes, row by row, with a relative slack of 1e-9.
pub fn max_principle_check(params: &DrnParams, state: &DrnState) -> Result<MaxPrincipleReport> {
    state.matches(params)?;
    let num_layers = params.num_layers();
    let amp = layer_amplitudes(params, state);
    let gains = params.gains();
    let max_gain = gains.iter().cloned().fold(0.0, f64::max);
    let mut pass = true;
    for row in amp.rows() {
        let global = row[0].max(max_gain);
        for l in 1..=num_layers {
            let tail = gains[l - 1..].iter().cloned().fold(0.0, f64::max);
            let bound = row[l - 1].max(tail);
            pass &= row[l] <= bound + MAX_PRINCIPLE_SLACK * bound.max(1.0);
            pass &= row[l] <= global + MAX_PRINCIPLE_SLACK * global.max(1.0);
        }
    }
    let v_max = (0..=num_layers).map(|l| amp.column(l).fold(0.0f64, |m, &x| m.max(x))).collect();
    Ok(MaxPrincipleReport { pass, v_max })
}

/// Bound for bias-free networks with bidirectional amplifiers:
/// `A^(ℓ) |v_k^(ℓ)| <= A^(0) max_j |v_j^(0)|` where `A^(ℓ) = a^(ℓ+1) ⋯ a^(L)`.
/// Returns `(pass, worst ratio lhs / rhs)`.
pub fn amplified_bound_check(params: &DrnParams, state: &DrnState) -> Result<(bool, f64)> {
    state.matches(params)?;
    let a = params
        .amplifier_gains()
        .ok_or_else(|| DrnError::param("network has no amplifier gains"))?;
    let num_layers = params.num_layers();
    let cumulative: Vec<f64> = (0..=num_layers).map(|l| a[l..].iter().product()).collect();
    let amp = layer_amplitudes(params, state);
    let mut worst = 0.0f64;
    let mut pass = true;
    for row in amp.rows() {
        let rhs = cumulative[0] * row[0];
        for l in 1..=num_layers {
            let lhs = cumulative[l] * row[l];
            pass &= lhs <= rhs + MAX_PRINCIPLE_SLACK * rhs.max(1.0);
            if rhs > 0.0 {
                worst = worst.max(lhs / rhs);
            }
        }
    }
    Ok((pass, worst))
}

/// Largest `|v_{2k+1} + v_{2k}|` over hidden pairs of `layer`.
pub fn antisymmetry_defect(state: &DrnState, layer: usize) -> f64 {
    let v = state.layer(layer);
    let mut worst = 0.0f64;
    for row in v.rows() {
        let mut k = 2;
        while k + 1 < row.len() {
            worst = worst.max((row[k] + row[k + 1]).abs());
            k += 2;
        }
    }
    worst
}
