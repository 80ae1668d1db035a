//! Fully connected Q-network: ReLU hidden layers, one linear output.
//!
//! All layer arithmetic goes through one batched matrix product, and a single
//! forward pass is a batch of one, so [`QNetwork::sweep`] reproduces
//! [`QNetwork::forward`] bit for bit.

use rand::Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CD2DQNET";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    /// `out = x W^T + b` for `rows` stacked inputs.
    fn affine(&self, x: &[f64], rows: usize, out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), rows * self.inputs);
        out.clear();
        out.resize(rows * self.outputs, 0.0);
        // SAFETY: the strides describe x (rows x inputs, row-major),
        // W^T (inputs x outputs) and out (rows x outputs, row-major), all of
        // which lie within their slices.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                self.inputs,
                self.outputs,
                1.0,
                x.as_ptr(),
                self.inputs as isize,
                1,
                self.weights.as_ptr(),
                1,
                self.inputs as isize,
                0.0,
                out.as_mut_ptr(),
                self.outputs as isize,
                1,
            );
        }
        for row in out.chunks_exact_mut(self.outputs) {
            for (z, b) in row.iter_mut().zip(&self.biases) {
                *z += b;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Parameter gradients, laid out like [`QNetwork::params`].
pub type Gradient = Vec<f64>;

impl QNetwork {
    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::arg("network needs at least an input and an output layer"));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::arg("Q-network output layer must have size 1"));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self { layers })
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flat view: for each layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::arg(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.biases.len());
            l.weights.copy_from_slice(w);
            l.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.input_size() {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "network expects {} features, got {}",
                self.input_size(),
                x.len()
            )))
        }
    }

    /// Activations of every layer for a stacked batch, input included.
    fn activations(&self, x: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            l.affine(&acts[k], rows, &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.activations(x, 1)[self.layers.len()][0])
    }

    /// Outputs for `rows` inputs stacked row-major in `x`.
    pub fn forward_batch(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        if x.len() != rows * self.input_size() {
            return Err(Error::arg(format!(
                "batch of {rows} needs {} features, got {}",
                rows * self.input_size(),
                x.len()
            )));
        }
        Ok(self.activations(x, rows).pop().unwrap_or_default())
    }

    /// Loss `mean((target - Q(x))^2)` over the batch and its gradient.
    pub fn mse_gradient(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Gradient)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::arg("batch must be non-empty with one target per input"));
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let rows = inputs.len();
        let acts = self.activations(&inputs.concat(), rows);
        let out = &acts[self.layers.len()];
        let nb = rows as f64;
        let mut loss = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let e = y - t;
                loss += e * e;
                2.0 * e / nb
            })
            .collect();

        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let input = &acts[k];
            let mut g = vec![0.0; l.weights.len() + l.biases.len()];
            // dW = delta^T A  (outputs x inputs)
            // SAFETY: delta is rows x outputs, input rows x inputs, g starts
            // with an outputs x inputs block; strides match those shapes.
            unsafe {
                matrixmultiply::dgemm(
                    l.outputs,
                    rows,
                    l.inputs,
                    1.0,
                    delta.as_ptr(),
                    1,
                    l.outputs as isize,
                    input.as_ptr(),
                    l.inputs as isize,
                    1,
                    0.0,
                    g.as_mut_ptr(),
                    l.inputs as isize,
                    1,
                );
            }
            let gb = &mut g[l.weights.len()..];
            for row in delta.chunks_exact(l.outputs) {
                for (b, d) in gb.iter_mut().zip(row) {
                    *b += d;
                }
            }
            grads[k] = g;
            if k > 0 {
                // delta_prev = (delta W) masked by the ReLU derivative
                let mut prev = vec![0.0; rows * l.inputs];
                // SAFETY: delta rows x outputs, W outputs x inputs, prev
                // rows x inputs, all row-major.
                unsafe {
                    matrixmultiply::dgemm(
                        rows,
                        l.outputs,
                        l.inputs,
                        1.0,
                        delta.as_ptr(),
                        l.outputs as isize,
                        1,
                        l.weights.as_ptr(),
                        l.inputs as isize,
                        1,
                        0.0,
                        prev.as_mut_ptr(),
                        l.inputs as isize,
                        1,
                    );
                }
                for (d, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss / nb, grads.concat()))
    }

    /// `params -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) {
        let mut i = 0;
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *p -= lr * grad[i];
                i += 1;
            }
        }
    }

    /// Evaluates the network on `prefix ++ suffix` for every point of the
    /// lattice `axes[0] x axes[1] x ...`, last axis fastest. Calls `visit`
    /// with `(position, q)` in ascending position order.
    pub fn sweep(&self, prefix: &[f64], axes: &[Vec<f64>], mut visit: impl FnMut(usize, f64)) {
        const CHUNK: usize = 512;
        let width = self.input_size();
        assert_eq!(prefix.len() + axes.len(), width, "feature count mismatch");
        let p = prefix.len();
        let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        let mut levels = vec![0usize; axes.len()];
        let mut x = Vec::with_capacity(CHUNK * width);
        let mut pos = 0;
        while pos < total {
            let rows = CHUNK.min(total - pos);
            x.clear();
            for _ in 0..rows {
                x.extend_from_slice(prefix);
                x.extend(levels.iter().enumerate().map(|(k, &l)| axes[k][l]));
                for k in (0..levels.len()).rev() {
                    levels[k] += 1;
                    if levels[k] < sizes[k] {
                        break;
                    }
                    levels[k] = 0;
                }
            }
            debug_assert_eq!(x.len(), rows * (p + axes.len()));
            let acts = self.activations(&x, rows);
            for (i, q) in acts[self.layers.len()].iter().enumerate() {
                visit(pos + i, *q);
            }
            pos += rows;
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.layer_sizes();
        let mut out = Vec::with_capacity(16 + 4 * sizes.len() + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::arg(format!("network checkpoint: {reason}"));
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n_sizes = u32_at(take(4)?) as usize;
        if n_sizes > 64 {
            return Err(bad("too many layers"));
        }
        let sizes = (0..n_sizes)
            .map(|_| take(4).map(|b| u32_at(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&sizes)?;
        let params = (0..net.param_count())
            .map(|_| take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        if !take(1).is_err() {
            return Err(bad("trailing bytes"));
        }
        net.set_params(&params)?;
        Ok(net)
    }
}
