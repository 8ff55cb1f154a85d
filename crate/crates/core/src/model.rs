//! Deep resistive network data model.
//!
//! Layer `0` holds the input nodes (VCVS outputs), layers `1..L-1` are hidden
//! and layer `L` is the output. Input and hidden layers reserve nodes `0` and
//! `1` for the bias pair pinned at `+A^(ℓ)` and `-A^(ℓ)`. In hidden layers the
//! remaining even nodes are excitatory (`v >= 0`) and odd nodes inhibitory
//! (`v <= 0`). Output nodes are linear and carry no bias pair.
//!
//! `coupling(ℓ)` is the `N_{ℓ-1} × N_ℓ` conductance matrix between layer
//! `ℓ-1` and layer `ℓ`. Columns that land on a pinned node of layer `ℓ` are
//! structurally absent and always zero.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{DrnError, Result};
use crate::relu::ByteReader;
use crate::rng;

const CHECKPOINT_MAGIC: &[u8; 4] = b"DRN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitPolarity {
    Input,
    BiasPositive,
    BiasNegative,
    /// Diode clamps the potential to be non-negative.
    Excitatory,
    /// Diode clamps the potential to be non-positive.
    Inhibitory,
    Linear,
}

impl UnitPolarity {
    /// Potential fixed by a source rather than by the network.
    pub fn is_pinned(self) -> bool {
        matches!(self, UnitPolarity::Input | UnitPolarity::BiasPositive | UnitPolarity::BiasNegative)
    }

    /// Projection of an unconstrained potential onto the unit's feasible set.
    #[inline]
    pub fn clip(self, p: f64) -> f64 {
        match self {
            UnitPolarity::Excitatory => p.max(0.0),
            UnitPolarity::Inhibitory => p.min(0.0),
            _ => p,
        }
    }
}

pub fn polarity(num_layers: usize, layer: usize, unit: usize) -> UnitPolarity {
    if layer == num_layers {
        UnitPolarity::Linear
    } else if unit == 0 {
        UnitPolarity::BiasPositive
    } else if unit == 1 {
        UnitPolarity::BiasNegative
    } else if layer == 0 {
        UnitPolarity::Input
    } else if unit % 2 == 0 {
        UnitPolarity::Excitatory
    } else {
        UnitPolarity::Inhibitory
    }
}

/// Polarity of every node, as a pure function of the layer widths.
pub fn polarity_layout(widths: &[usize]) -> Vec<Vec<UnitPolarity>> {
    let num_layers = widths.len() - 1;
    widths
        .iter()
        .enumerate()
        .map(|(l, &n)| (0..n).map(|k| polarity(num_layers, l, k)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrnParams {
    widths: Vec<usize>,
    couplings: Vec<Array2<f64>>,
    leaks: Vec<Array1<f64>>,
    gains: Vec<f64>,
    amplifier_gains: Option<Vec<f64>>,
    leaks_enabled: bool,
    layout: Vec<Vec<UnitPolarity>>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(DrnError::param(format!("need at least two layers, got widths {widths:?}")));
    }
    let last = widths.len() - 1;
    if widths[0] < 4 || widths[0] % 2 != 0 {
        return Err(DrnError::param(format!(
            "input layer width must be 2q+2 with q >= 1, got {}",
            widths[0]
        )));
    }
    for (l, &n) in widths.iter().enumerate().take(last).skip(1) {
        if n < 3 {
            return Err(DrnError::param(format!(
                "hidden layer {l} needs a bias pair and at least one unit, got width {n}"
            )));
        }
    }
    if widths[last] == 0 {
        return Err(DrnError::param("output layer is empty"));
    }
    Ok(())
}

impl DrnParams {
    /// Builds and validates a parameter set.
    ///
    /// `couplings[ℓ-1]` and `leaks[ℓ-1]` belong to layer `ℓ`; `gains` holds
    /// `A^(0) ..= A^(L-1)`. Negative zeros are normalized to `+0.0`.
    pub fn new(
        widths: Vec<usize>,
        couplings: Vec<Array2<f64>>,
        leaks: Vec<Array1<f64>>,
        gains: Vec<f64>,
        leaks_enabled: bool,
    ) -> Result<Self> {
        check_widths(&widths)?;
        let layout = polarity_layout(&widths);
        let mut params = DrnParams {
            widths,
            couplings,
            leaks,
            gains,
            amplifier_gains: None,
            leaks_enabled,
            layout,
        };
        params.normalize_zeros();
        params.validate()?;
        Ok(params)
    }

    /// Sets the per-layer gains `a^(1) ..= a^(L)` used in bidirectional
    /// amplifier mode.
    pub fn with_amplifier_gains(mut self, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != self.num_layers() {
            return Err(DrnError::dim(format!(
                "{} amplifier gains for {} layers",
                gains.len(),
                self.num_layers()
            )));
        }
        if !gains.iter().all(|&a| a.is_finite() && a > 0.0) {
            return Err(DrnError::param("amplifier gains must be positive and finite"));
        }
        self.amplifier_gains = Some(gains);
        Ok(self)
    }

    /// Replaces the bias/input gains `A^(0) ..= A^(L-1)`.
    pub fn with_gains(mut self, gains: Vec<f64>) -> Result<Self> {
        self.gains = gains;
        self.validate()?;
        Ok(self)
    }

    fn normalize_zeros(&mut self) {
        for v in self.couplings.iter_mut().flat_map(|g| g.iter_mut()) {
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        for v in self.leaks.iter_mut().flat_map(|g| g.iter_mut()) {
            if *v == 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Checks every structural and physical invariant.
    pub fn validate(&self) -> Result<()> {
        let num_layers = self.num_layers();
        if self.couplings.len() != num_layers || self.leaks.len() != num_layers {
            return Err(DrnError::dim(format!(
                "{} layers but {} coupling matrices and {} leak vectors",
                num_layers,
                self.couplings.len(),
                self.leaks.len()
            )));
        }
        if self.gains.len() != num_layers {
            return Err(DrnError::dim(format!(
                "{} gains for {} layers (expected A^(0)..A^(L-1))",
                self.gains.len(),
                num_layers
            )));
        }
        if !self.gains.iter().all(|&a| a.is_finite() && a > 0.0) {
            return Err(DrnError::param(format!("gains must be positive, got {:?}", self.gains)));
        }
        for l in 1..=num_layers {
            let g = &self.couplings[l - 1];
            if g.dim() != (self.widths[l - 1], self.widths[l]) {
                return Err(DrnError::dim(format!(
                    "coupling {l} has shape {:?}, expected ({}, {})",
                    g.dim(),
                    self.widths[l - 1],
                    self.widths[l]
                )));
            }
            let leak = &self.leaks[l - 1];
            if leak.len() != self.widths[l] {
                return Err(DrnError::dim(format!(
                    "leak vector {l} has length {}, expected {}",
                    leak.len(),
                    self.widths[l]
                )));
            }
            if !g.iter().chain(leak.iter()).all(|v| v.is_finite()) {
                return Err(DrnError::NonFinite(format!("conductances of layer {l}")));
            }
            if g.iter().chain(leak.iter()).any(|&v| v < 0.0) {
                return Err(DrnError::param(format!("layer {l} has a negative conductance")));
            }
            if !self.leaks_enabled && leak.iter().any(|&v| v != 0.0) {
                return Err(DrnError::param(format!(
                    "layer {l} has leak conductances but leaks are disabled"
                )));
            }
            for (k, pol) in self.layout[l].iter().enumerate() {
                if pol.is_pinned() && (leak[k] != 0.0 || g.column(k).iter().any(|&v| v != 0.0)) {
                    return Err(DrnError::param(format!(
                        "layer {l} node {k} is pinned but has incoming conductances"
                    )));
                }
            }
        }
        for l in 1..=num_layers {
            let den = self.denominators(l);
            for (k, pol) in self.layout[l].iter().enumerate() {
                if !pol.is_pinned() && !(den[k] > 0.0) {
                    return Err(DrnError::IsolatedNode { layer: l, unit: k });
                }
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `N_0 ..= N_L`.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Input dimension `q` (the input layer has `2q + 2` nodes).
    pub fn input_dim(&self) -> usize {
        (self.widths[0] - 2) / 2
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.num_layers()]
    }

    /// Conductances between layer `layer - 1` and `layer` (1-based).
    pub fn coupling(&self, layer: usize) -> ArrayView2<'_, f64> {
        self.couplings[layer - 1].view()
    }

    pub(crate) fn coupling_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        self.couplings[layer - 1].view_mut()
    }

    /// Leak conductances to ground of the nodes of `layer` (1-based).
    pub fn leak(&self, layer: usize) -> ArrayView1<'_, f64> {
        self.leaks[layer - 1].view()
    }

    pub(crate) fn leak_mut(&mut self, layer: usize) -> &mut Array1<f64> {
        &mut self.leaks[layer - 1]
    }

    /// `A^(ℓ)` for `0 <= ℓ < L`.
    pub fn gain(&self, layer: usize) -> f64 {
        self.gains[layer]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// `a^(1) ..= a^(L)` when bidirectional amplifiers are configured.
    pub fn amplifier_gains(&self) -> Option<&[f64]> {
        self.amplifier_gains.as_deref()
    }

    pub fn leaks_enabled(&self) -> bool {
        self.leaks_enabled
    }

    pub fn layout(&self) -> &[Vec<UnitPolarity>] {
        &self.layout
    }

    pub fn polarity(&self, layer: usize, unit: usize) -> UnitPolarity {
        self.layout[layer][unit]
    }

    /// Total conductance seen by each node of `layer`:
    /// `g_k + Σ_j g_jk^(ℓ) + Σ_j g_kj^(ℓ+1)`.
    pub fn denominators(&self, layer: usize) -> Array1<f64> {
        let mut den = &self.leaks[layer - 1] + &self.couplings[layer - 1].sum_axis(Axis(0));
        if layer < self.num_layers() {
            den += &self.couplings[layer].sum_axis(Axis(1));
        }
        den
    }

    /// Whether conductances into node `to` of `layer` exist at all (pinned
    /// nodes take no incoming resistors).
    pub fn is_wired(&self, layer: usize, to: usize) -> bool {
        !self.layout[layer][to].is_pinned()
    }

    /// Writes the binary `DRN1` checkpoint (little-endian).
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(self.num_layers() as u32).to_le_bytes())?;
        for &n in &self.widths {
            out.write_all(&(n as u32).to_le_bytes())?;
        }
        out.write_all(&[u8::from(self.leaks_enabled), u8::from(self.amplifier_gains.is_some())])?;
        let amp = self.amplifier_gains.as_deref().unwrap_or(&[]);
        for v in self.gains.iter().chain(amp) {
            out.write_all(&v.to_le_bytes())?;
        }
        for (g, leak) in self.couplings.iter().zip(&self.leaks) {
            for v in g.iter().chain(leak.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut reader = ByteReader::new(input);
        let magic = reader.array::<4>()?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(DrnError::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"DRN1\""),
            });
        }
        let num_layers = reader.u32()? as usize;
        if num_layers == 0 {
            return Err(DrnError::Format { offset: 4, message: "zero layers".into() });
        }
        let widths = (0..=num_layers)
            .map(|_| reader.u32().map(|n| n as usize))
            .collect::<Result<Vec<_>>>()?;
        let leaks_enabled = reader.u8()? != 0;
        let has_amp = reader.u8()? != 0;
        let gains = reader.f64s(num_layers)?;
        let amp = if has_amp { Some(reader.f64s(num_layers)?) } else { None };
        let mut couplings = Vec::with_capacity(num_layers);
        let mut leaks = Vec::with_capacity(num_layers);
        for l in 1..=num_layers {
            let (rows, cols) = (widths[l - 1], widths[l]);
            let g = reader.f64s(rows * cols)?;
            couplings.push(Array2::from_shape_vec((rows, cols), g).expect("length checked"));
            leaks.push(Array1::from(reader.f64s(cols)?));
        }
        reader.expect_eof()?;
        let params = DrnParams::new(widths, couplings, leaks, gains, leaks_enabled)?;
        match amp {
            Some(a) => params.with_amplifier_gains(a),
            None => Ok(params),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        DrnParams::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Input-layer potentials for one input vector: the bias pair `±A0`
/// followed by `(+A0·x_k, -A0·x_k)` for each component.
pub fn encode_input(x: &[f64], a0: f64) -> Result<Vec<f64>> {
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(DrnError::param(format!("input gain must be positive, got {a0}")));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(DrnError::NonFinite("input vector".into()));
    }
    let mut v = Vec::with_capacity(2 * x.len() + 2);
    v.push(a0);
    v.push(-a0);
    for &xk in x {
        v.push(a0 * xk);
        v.push(-(a0 * xk));
    }
    Ok(v)
}

/// Row-wise [`encode_input`] over a batch.
pub fn encode_batch(xs: ArrayView2<'_, f64>, a0: f64) -> Result<Array2<f64>> {
    let (batch, q) = xs.dim();
    let mut out = Array2::zeros((batch, 2 * q + 2));
    for (row, x) in out.rows_mut().into_iter().zip(xs.rows()) {
        let x = x.to_vec();
        let enc = encode_input(&x, a0)?;
        for (dst, src) in row.into_iter().zip(enc) {
            *dst = src;
        }
    }
    Ok(out)
}

/// Node potentials for a batch: one `batch × N_ℓ` matrix per layer,
/// including the pinned input layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DrnState {
    layers: Vec<Array2<f64>>,
}

impl DrnState {
    /// Pins the encoded inputs and bias nodes; every other node starts at 0.
    pub fn initial(params: &DrnParams, xs: ArrayView2<'_, f64>) -> Result<Self> {
        if xs.ncols() != params.input_dim() {
            return Err(DrnError::dim(format!(
                "inputs have {} columns, network expects {}",
                xs.ncols(),
                params.input_dim()
            )));
        }
        let encoded = encode_batch(xs, params.gain(0))?;
        DrnState::from_encoded(params, encoded)
    }

    /// Like [`DrnState::initial`] for an already-encoded input layer.
    pub fn from_encoded(params: &DrnParams, input_layer: Array2<f64>) -> Result<Self> {
        if input_layer.ncols() != params.widths()[0] {
            return Err(DrnError::dim(format!(
                "input layer has {} columns, expected {}",
                input_layer.ncols(),
                params.widths()[0]
            )));
        }
        if !input_layer.iter().all(|v| v.is_finite()) {
            return Err(DrnError::NonFinite("input layer".into()));
        }
        let batch = input_layer.nrows();
        let mut layers = vec![input_layer];
        for l in 1..=params.num_layers() {
            let mut v = Array2::zeros((batch, params.widths()[l]));
            if l < params.num_layers() {
                v.column_mut(0).fill(params.gain(l));
                v.column_mut(1).fill(-params.gain(l));
            }
            layers.push(v);
        }
        Ok(DrnState { layers })
    }

    /// Wraps raw per-layer potentials without any checks.
    pub fn from_layers(layers: Vec<Array2<f64>>) -> Self {
        DrnState { layers }
    }

    pub fn batch_size(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, layer: usize) -> ArrayView2<'_, f64> {
        self.layers[layer].view()
    }

    pub fn layer_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        self.layers[layer].view_mut()
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.layers[self.layers.len() - 1].view()
    }

    pub(crate) fn matches(&self, params: &DrnParams) -> Result<()> {
        if self.layers.len() != params.widths().len() {
            return Err(DrnError::dim(format!(
                "state has {} layers, network has {}",
                self.layers.len(),
                params.widths().len()
            )));
        }
        let batch = self.batch_size();
        for (l, (v, &n)) in self.layers.iter().zip(params.widths()).enumerate() {
            if v.dim() != (batch, n) {
                return Err(DrnError::dim(format!(
                    "state layer {l} has shape {:?}, expected ({batch}, {n})",
                    v.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Randomly initialized network with leaks disabled and all gains 1.
///
/// `g_jk^(ℓ) = max(0, h)`, `h ~ U(-c, c)`, `c = sqrt(1 / N_{ℓ-1})`, drawn from
/// random stream `ℓ`. Columns landing on pinned nodes stay zero. A column
/// that comes out entirely zero is redrawn, so that no unit is cut off from
/// the previous layer.
pub fn random_drn(widths: &[usize], seed: u64) -> Result<DrnParams> {
    check_widths(widths)?;
    let layout = polarity_layout(widths);
    let num_layers = widths.len() - 1;
    let mut couplings = Vec::with_capacity(num_layers);
    for l in 1..=num_layers {
        let (rows, cols) = (widths[l - 1], widths[l]);
        let c = (1.0 / rows as f64).sqrt();
        let mut rng = rng::stream(seed, l as u64);
        let mut g = Array2::zeros((rows, cols));
        for k in 0..cols {
            if layout[l][k].is_pinned() {
                continue;
            }
            let mut column = g.column_mut(k);
            loop {
                column.map_inplace(|v| *v = rng.gen_range(-c..c).max(0.0));
                if column.iter().any(|&v| v > 0.0) {
                    break;
                }
            }
        }
        couplings.push(g);
    }
    let leaks = widths[1..].iter().map(|&n| Array1::zeros(n)).collect();
    DrnParams::new(widths.to_vec(), couplings, leaks, vec![1.0; num_layers], false)
}
