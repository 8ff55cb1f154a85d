//! Reference ReLU multilayer perceptron.
//!
//! This is the ground truth that compiled resistive networks are checked
//! against. Weights of layer `ℓ` are stored as an `M_{ℓ-1} × M_ℓ` matrix so
//! that `w[[j, k]]` connects unit `j` of the previous layer to unit `k`;
//! biases are kept in a separate vector.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{DrnError, Result};
use crate::rng;

const WEIGHTS_MAGIC: &[u8; 4] = b"RNN1";

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-layer states `s^(0) ..= s^(L)` of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluActivations {
    pub layers: Vec<Array1<f64>>,
}

impl ReluActivations {
    pub fn output(&self) -> &Array1<f64> {
        self.layers.last().expect("at least the input layer")
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(DrnError::param(format!(
            "a network needs at least an input and an output layer, got dims {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(DrnError::param(format!("layer widths must be positive, got {dims:?}")));
    }
    Ok(())
}

impl ReluNet {
    pub fn new(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(DrnError::dim(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut dims = vec![weights[0].nrows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let layer = l + 1;
            if w.nrows() != dims[l] {
                return Err(DrnError::dim(format!(
                    "layer {layer}: weight matrix has {} rows, previous layer has {} units",
                    w.nrows(),
                    dims[l]
                )));
            }
            if b.len() != w.ncols() {
                return Err(DrnError::dim(format!(
                    "layer {layer}: {} biases for {} units",
                    b.len(),
                    w.ncols()
                )));
            }
            if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
                return Err(DrnError::NonFinite(format!("layer {layer} parameters")));
            }
            dims.push(w.ncols());
        }
        check_dims(&dims)?;
        Ok(ReluNet { dims, weights, biases })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// `M_0 ..= M_L`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Weights of layer `layer` (1-based), shape `M_{ℓ-1} × M_ℓ`.
    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        self.weights[layer - 1].view()
    }

    pub fn biases(&self, layer: usize) -> ArrayView1<'_, f64> {
        self.biases[layer - 1].view()
    }

    /// Exact forward pass for a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<ReluActivations> {
        if x.len() != self.dims[0] {
            return Err(DrnError::dim(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.dims[0]
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(DrnError::NonFinite("network input".into()));
        }
        let last = self.num_layers();
        let mut layers = Vec::with_capacity(last + 1);
        layers.push(Array1::from(x.to_vec()));
        for l in 1..=last {
            let mut s = layers[l - 1].dot(&self.weights[l - 1]) + &self.biases[l - 1];
            if l < last {
                s.mapv_inplace(|v| v.max(0.0));
            }
            layers.push(s);
        }
        Ok(ReluActivations { layers })
    }

    /// Forward pass over a batch (rows are inputs); returns the output layer.
    pub fn forward_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.dims[0] {
            return Err(DrnError::dim(format!(
                "batch has {} columns, network expects {}",
                xs.ncols(),
                self.dims[0]
            )));
        }
        if !xs.iter().all(|v| v.is_finite()) {
            return Err(DrnError::NonFinite("network input".into()));
        }
        let last = self.num_layers();
        let mut s = xs.to_owned();
        for l in 1..=last {
            s = s.dot(&self.weights[l - 1]) + self.biases[l - 1].view().insert_axis(Axis(0));
            if l < last {
                s.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(s)
    }

    /// Scales weights and biases of one layer by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: f64) {
        self.weights[layer - 1].mapv_inplace(|w| w * factor);
        self.biases[layer - 1].mapv_inplace(|b| b * factor);
    }

    /// Writes the little-endian `RNN1` weight file.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(WEIGHTS_MAGIC)?;
        out.write_all(&(self.num_layers() as u32).to_le_bytes())?;
        for &d in &self.dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            // Standard-layout iteration is row-major.
            for v in w.iter().chain(b.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut reader = ByteReader::new(input);
        let magic = reader.array::<4>()?;
        if &magic != WEIGHTS_MAGIC {
            return Err(DrnError::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"RNN1\""),
            });
        }
        let num_layers = reader.u32()? as usize;
        if num_layers == 0 {
            return Err(DrnError::Format { offset: 4, message: "zero layers".into() });
        }
        let mut dims = Vec::with_capacity(num_layers + 1);
        for _ in 0..=num_layers {
            dims.push(reader.u32()? as usize);
        }
        let mut weights = Vec::with_capacity(num_layers);
        let mut biases = Vec::with_capacity(num_layers);
        for l in 1..=num_layers {
            let (rows, cols) = (dims[l - 1], dims[l]);
            let w = reader.f64s(rows * cols)?;
            let b = reader.f64s(cols)?;
            weights.push(Array2::from_shape_vec((rows, cols), w).expect("length checked"));
            biases.push(Array1::from(b));
        }
        reader.expect_eof()?;
        ReluNet::new(weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        ReluNet::read_from(std::io::BufReader::new(file))
    }
}

/// Kaiming-uniform initialization: `w ~ U(-c, c)` with `c = sqrt(1 / fan_in)`,
/// biases zero. Layer `ℓ` draws from random stream `ℓ` of `seed`.
pub fn init_relu_net(dims: &[usize], seed: u64) -> Result<ReluNet> {
    check_dims(dims)?;
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for l in 1..dims.len() {
        let (fan_in, fan_out) = (dims[l - 1], dims[l]);
        let c = (1.0 / fan_in as f64).sqrt();
        let mut rng = rng::stream(seed, l as u64);
        weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-c..c)));
        biases.push(Array1::zeros(fan_out));
    }
    ReluNet::new(weights, biases)
}

/// Little-endian reader that tracks its byte offset for error messages.
pub(crate) struct ByteReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> ByteReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        ByteReader { inner, offset: 0 }
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| DrnError::Format {
            offset: self.offset,
            message: format!("truncated input ({e})"),
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(DrnError::Format {
                offset: self.offset,
                message: "trailing bytes after payload".into(),
            }),
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn weight_file_round_trip_is_bit_exact(
            dims in proptest::collection::vec(1usize..5, 2..5),
            seed in any::<u64>(),
            bias in -10.0f64..10.0,
        ) {
            let mut net = init_relu_net(&dims, seed).unwrap();
            for b in net.biases.iter_mut() {
                b.fill(bias);
            }
            let mut bytes = Vec::new();
            net.write_to(&mut bytes).unwrap();
            let back = ReluNet::read_from(&bytes[..]).unwrap();
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            prop_assert_eq!(bytes, again);
            prop_assert_eq!(back, net);
        }
    }
}
