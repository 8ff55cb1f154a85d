//! Translation of a ReLU perceptron into a resistive network that computes
//! the same function up to `O(γ)`.
//!
//! Each neuron `k` of a hidden layer becomes an excitatory/inhibitory node
//! pair (`2k+2`, `2k+3`) that settles near `(+A^(ℓ) s_k, -A^(ℓ) s_k)`. Layer `ℓ`
//! conductances are scaled by `γ^ℓ`, which makes feedback from deeper layers
//! negligible, and leaks top every column up to the common gain `a^(ℓ)`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::error::{DrnError, Result};
use crate::model::DrnParams;
use crate::relu::ReluNet;
use crate::solver::{self, SolverConfig, SteadyStateCert};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileConfig {
    pub gamma: f64,
    pub include_output_leaks: bool,
}

impl CompileConfig {
    pub fn new(gamma: f64) -> Self {
        CompileConfig { gamma, ..CompileConfig::default() }
    }
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig { gamma: 1e-2, include_output_leaks: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGains {
    /// `a^(1) ..= a^(L)`.
    pub layer: Vec<f64>,
    /// `A^(0) ..= A^(L-1)` with `A^(ℓ) = a^(ℓ+1) ⋯ a^(L)`.
    pub cumulative: Vec<f64>,
}

/// Absolute column sums of layer `ℓ` including the bias row.
fn column_sums(net: &ReluNet, layer: usize) -> Array1<f64> {
    let w = net.weights(layer);
    let b = net.biases(layer);
    Array1::from_shape_fn(w.ncols(), |k| w.column(k).iter().fold(b[k].abs(), |s, x| s + x.abs()))
}

/// `a^(ℓ) = max_k Σ_{j=0}^{M_{ℓ-1}} |w_jk^(ℓ)|`, the bias counting as row 0.
pub fn layer_gain(net: &ReluNet, layer: usize) -> Result<f64> {
    if layer == 0 || layer > net.num_layers() {
        return Err(DrnError::param(format!(
            "layer {layer} out of range 1..={}",
            net.num_layers()
        )));
    }
    let a = column_sums(net, layer).fold(0.0f64, |m, &s| m.max(s));
    if a > 0.0 {
        Ok(a)
    } else {
        Err(DrnError::DegenerateLayer { layer })
    }
}

pub fn layer_gains(net: &ReluNet) -> Result<LayerGains> {
    let num_layers = net.num_layers();
    let layer: Vec<f64> = (1..=num_layers).map(|l| layer_gain(net, l)).collect::<Result<_>>()?;
    let mut cumulative = vec![1.0; num_layers];
    for l in (0..num_layers).rev() {
        let next = if l + 1 < num_layers { cumulative[l + 1] } else { 1.0 };
        cumulative[l] = layer[l] * next;
    }
    Ok(LayerGains { layer, cumulative })
}

/// Node of the DRN layer that carries the positive copy of neuron `k`
/// (bias row `j = 0` maps to the bias pair).
fn pair_node(k: usize) -> usize {
    2 * k + 2
}

pub fn compile(net: &ReluNet, cfg: &CompileConfig) -> Result<DrnParams> {
    if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
        return Err(DrnError::param(format!("gamma must lie in (0, 1], got {}", cfg.gamma)));
    }
    let num_layers = net.num_layers();
    let gains = layer_gains(net)?;
    let dims = net.dims();
    let widths: Vec<usize> = dims
        .iter()
        .enumerate()
        .map(|(l, &m)| if l == num_layers { m } else { 2 * m + 2 })
        .collect();

    let mut couplings = Vec::with_capacity(num_layers);
    let mut leaks = Vec::with_capacity(num_layers);
    for l in 1..=num_layers {
        let scale = cfg.gamma.powi(l as i32);
        let w = net.weights(l);
        let b = net.biases(l);
        let output = l == num_layers;
        let mut g = Array2::zeros((widths[l - 1], widths[l]));
        // Row j = 0 is the bias, rows 1.. are the weights.
        for k in 0..dims[l] {
            for j in 0..=dims[l - 1] {
                let wjk = if j == 0 { b[k] } else { w[[j - 1, k]] };
                let pos = (scale * wjk).max(0.0);
                let neg = (-scale * wjk).max(0.0);
                let (src_pos, src_neg) = if j == 0 { (0, 1) } else { (pair_node(j - 1), pair_node(j - 1) + 1) };
                if output {
                    g[[src_pos, k]] = pos;
                    g[[src_neg, k]] = neg;
                } else {
                    let (exc, inh) = (pair_node(k), pair_node(k) + 1);
                    g[[src_pos, exc]] = pos;
                    g[[src_pos, inh]] = neg;
                    g[[src_neg, exc]] = neg;
                    g[[src_neg, inh]] = pos;
                }
            }
        }
        let sums = column_sums(net, l);
        let a = gains.layer[l - 1];
        let mut leak = Array1::zeros(widths[l]);
        for k in 0..dims[l] {
            let value = (scale * (a - sums[k])).max(0.0);
            if output {
                if cfg.include_output_leaks {
                    leak[k] = value;
                }
            } else {
                leak[pair_node(k)] = value;
                leak[pair_node(k) + 1] = value;
            }
        }
        couplings.push(g);
        leaks.push(leak);
    }
    DrnParams::new(widths, couplings, leaks, gains.cumulative, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerDeviation {
    pub layer: usize,
    /// `max |v_{2k}^(ℓ) - A^(ℓ) s_k^(ℓ)|` for hidden layers and
    /// `max |v_k^(L) - s_k^(L)|` for the output.
    pub max_dev: f64,
    /// `max |v_{2k+1}^(ℓ) + v_{2k}^(ℓ)|`; absent for the output layer.
    pub antisym_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub gamma: Option<f64>,
    /// One entry per layer `1..=L`, the output last.
    pub layers: Vec<LayerDeviation>,
    pub cert: SteadyStateCert,
}

impl DeviationReport {
    pub fn output_dev(&self) -> f64 {
        self.layers.last().map_or(0.0, |d| d.max_dev)
    }

    /// Largest antisymmetry defect over hidden layers.
    pub fn antisym_defect(&self) -> f64 {
        self.layers.iter().filter_map(|d| d.antisym_defect).fold(0.0, f64::max)
    }
}

/// Solves `drn` on `xs` and measures how far it lands from `net`.
pub fn verify_compilation(
    net: &ReluNet,
    drn: &DrnParams,
    solver_cfg: &SolverConfig,
    xs: ArrayView2<'_, f64>,
) -> Result<DeviationReport> {
    let num_layers = net.num_layers();
    if drn.num_layers() != num_layers || drn.output_dim() != net.dims()[num_layers] {
        return Err(DrnError::dim("network and circuit have different shapes"));
    }
    let (state, cert) = solver::solve_steady_state(drn, xs, solver_cfg)?;
    let mut layers: Vec<LayerDeviation> = (1..=num_layers)
        .map(|layer| LayerDeviation {
            layer,
            max_dev: 0.0,
            antisym_defect: (layer < num_layers).then_some(0.0),
        })
        .collect();
    for (b, x) in xs.rows().into_iter().enumerate() {
        let acts = net.forward(&x.to_vec())?;
        for l in 1..=num_layers {
            let v = state.layer(l);
            let s = &acts.layers[l];
            let entry = &mut layers[l - 1];
            for k in 0..s.len() {
                if l == num_layers {
                    entry.max_dev = entry.max_dev.max((v[[b, k]] - s[k]).abs());
                } else {
                    let (exc, inh) = (v[[b, pair_node(k)]], v[[b, pair_node(k) + 1]]);
                    entry.max_dev = entry.max_dev.max((exc - drn.gain(l) * s[k]).abs());
                    let defect = entry.antisym_defect.as_mut().expect("hidden layer");
                    *defect = defect.max((exc + inh).abs());
                }
            }
        }
    }
    Ok(DeviationReport { gamma: None, layers, cert })
}

/// Compiles at `cfg.gamma` and verifies on `xs`.
pub fn compile_and_verify(
    net: &ReluNet,
    cfg: &CompileConfig,
    solver_cfg: &SolverConfig,
    xs: ArrayView2<'_, f64>,
) -> Result<DeviationReport> {
    let drn = compile(net, cfg)?;
    let mut report = verify_compilation(net, &drn, solver_cfg, xs)?;
    report.gamma = Some(cfg.gamma);
    Ok(report)
}

#[derive(Serialize)]
struct DeviationRow {
    gamma: Option<f64>,
    layer: usize,
    max_dev: f64,
    antisym_defect: Option<f64>,
}

/// CSV with columns `gamma,layer,max_dev,antisym_defect`, one row per layer
/// and report.
pub fn write_deviation_csv<W: Write>(reports: &[DeviationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for d in &r.layers {
            w.serialize(DeviationRow {
                gamma: r.gamma,
                layer: d.layer,
                max_dev: d.max_dev,
                antisym_defect: d.antisym_defect,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One-input network computing `|x| = relu(x) + relu(-x)`.
pub fn abs_value_net() -> ReluNet {
    ReluNet::new(
        vec![
            Array2::from_shape_vec((1, 2), vec![1.0, -1.0]).expect("shape"),
            Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).expect("shape"),
        ],
        vec![Array1::zeros(2), Array1::zeros(1)],
    )
    .expect("valid network")
}
