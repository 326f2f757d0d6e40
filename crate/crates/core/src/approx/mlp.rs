use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul, matmul_at_acc, matmul_bt, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameter storage with a named layout.
///
/// `generation` changes on every mutation through [`ParamVector::values_mut`],
/// which lets backward passes detect caches built from older parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<ParamBlock>,
    generation: u64,
}

impl ParamVector {
    pub fn zeros(layout: Vec<ParamBlock>) -> Self {
        let n = layout.iter().map(ParamBlock::size).sum();
        Self {
            values: vec![0.0; n],
            layout,
            generation: 0,
        }
    }

    pub fn from_values(layout: Vec<ParamBlock>, values: Vec<f64>) -> Result<Self> {
        let n: usize = layout.iter().map(ParamBlock::size).sum();
        if n != values.len() {
            return Err(Error::dims("parameter vector", n, values.len()));
        }
        Ok(Self {
            values,
            layout,
            generation: 0,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.generation = self.generation.wrapping_add(1);
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamBlock] {
        &self.layout
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &ParamVector) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::dims("parameter layout", self.len(), other.len()));
        }
        for (a, b) in self.values_mut().iter_mut().zip(&other.values) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.values_mut().iter_mut().for_each(|v| *v *= k);
    }

    /// Offset of a named block.
    pub fn offset_of(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for b in &self.layout {
            if b.name == name {
                return Some((off, b.size()));
            }
            off += b.size();
        }
        None
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.offset_of(name).map(|(o, n)| &self.values[o..o + n])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let (o, n) = self.offset_of(name)?;
        Some(&mut self.values_mut()[o..o + n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    /// Emits `[mean, log_std]`, `2 * output_dim` values; see
    /// [`super::gaussian_policy_sample`].
    TanhGaussian,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

/// Activations saved by [`MlpSpec::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Layer inputs: the network input followed by every hidden activation.
    acts: Vec<Matrix>,
    output: Matrix,
    generation: u64,
    pass: u64,
}

static PASS_COUNTER: AtomicU64 = AtomicU64::new(0);

impl MlpCache {
    pub fn input(&self) -> &Matrix {
        &self.acts[0]
    }

    /// Post-ReLU activations of each hidden layer.
    pub fn hidden(&self) -> &[Matrix] {
        &self.acts[1..]
    }

    /// Process-unique id of the forward pass that produced this cache.
    pub fn pass_id(&self) -> u64 {
        self.pass
    }
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden: Vec<usize>, head: Head) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden,
            head,
        }
    }

    pub fn head_width(&self) -> usize {
        match self.head {
            Head::TanhGaussian => 2 * self.output_dim,
            _ => self.output_dim,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.head_width());
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::Config(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn layout(&self) -> Vec<ParamBlock> {
        self.dims()
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    ParamBlock {
                        name: format!("l{l}.weight"),
                        shape: vec![w[1], w[0]],
                    },
                    ParamBlock {
                        name: format!("l{l}.bias"),
                        shape: vec![w[1]],
                    },
                ]
            })
            .collect()
    }

    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut p = ParamVector::zeros(self.layout());
        let dims = self.dims();
        let mut off = 0;
        let values = p.values_mut();
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for v in &mut values[off..off + n] {
                *v = rng.random_range(-bound..bound);
            }
            off += n;
        }
        p
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        let dims = self.dims();
        let layout = params.layout();
        let matches = layout.len() == 2 * (dims.len() - 1)
            && dims.windows(2).enumerate().all(|(l, w)| {
                layout[2 * l].shape == [w[1], w[0]] && layout[2 * l + 1].shape == [w[1]]
            });
        if !matches {
            let want: usize = self.layout().iter().map(ParamBlock::size).sum();
            return Err(Error::dims("network parameters", want, params.len()));
        }
        Ok(())
    }

    /// Batched forward pass; rows of `input` are independent samples.
    pub fn forward(&self, params: &ParamVector, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_params(params)?;
        if input.cols != self.input_dim {
            return Err(Error::dims("network input", self.input_dim, input.cols));
        }
        let dims = self.dims();
        let n_layers = dims.len() - 1;
        let batch = input.rows;
        let w = params.values();
        let mut acts = Vec::with_capacity(n_layers);
        acts.push(input.clone());
        let mut off = 0;
        let mut out = Matrix::zeros(0, 0);
        for l in 0..n_layers {
            let (din, dout) = (dims[l], dims[l + 1]);
            let weight = &w[off..off + din * dout];
            let bias = &w[off + din * dout..off + din * dout + dout];
            off += din * dout + dout;
            let mut z = Matrix::zeros(batch, dout);
            matmul_bt(&acts[l].data, weight, batch, din, dout, &mut z.data);
            let last = l + 1 == n_layers;
            for r in 0..batch {
                for (v, b) in z.row_mut(r).iter_mut().zip(bias) {
                    *v += b;
                    if !last {
                        *v = v.max(0.0);
                    } else if self.head == Head::Sigmoid {
                        *v = sigmoid(*v);
                    }
                }
            }
            if last {
                out = z;
            } else {
                acts.push(z);
            }
        }
        let cache = MlpCache {
            acts,
            output: out.clone(),
            generation: params.generation(),
            pass: PASS_COUNTER.fetch_add(1, Ordering::Relaxed),
        };
        Ok((out, cache))
    }

    /// Reverse-mode gradient of `sum(output ⊙ output_grad)` with respect to the
    /// parameters and the input.
    pub fn backward(
        &self,
        params: &ParamVector,
        cache: &MlpCache,
        output_grad: &Matrix,
    ) -> Result<(ParamVector, Matrix)> {
        self.check_params(params)?;
        if cache.generation != params.generation() {
            return Err(Error::StaleCache);
        }
        let dims = self.dims();
        let n_layers = dims.len() - 1;
        let batch = cache.acts[0].rows;
        if output_grad.rows != batch || output_grad.cols != self.head_width() {
            return Err(Error::dims("output gradient", batch * self.head_width(), output_grad.data.len()));
        }
        let mut delta = output_grad.clone();
        if self.head == Head::Sigmoid {
            for (d, y) in delta.data.iter_mut().zip(&cache.output.data) {
                *d *= y * (1.0 - y);
            }
        }
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += dims[l] * dims[l + 1] + dims[l + 1];
        }
        let mut grad = params.zeros_like();
        let w = params.values();
        let g = grad.values_mut();
        let mut input_grad = Matrix::zeros(0, 0);
        for l in (0..n_layers).rev() {
            let (din, dout) = (dims[l], dims[l + 1]);
            let o = offsets[l];
            let a = &cache.acts[l];
            // dW = deltaᵀ · a  (dout × din)
            matmul_at_acc(&delta.data, &a.data, batch, dout, din, &mut g[o..o + dout * din]);
            let gb = &mut g[o + dout * din..o + dout * din + dout];
            for r in 0..batch {
                for (b, d) in gb.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            let weight = &w[o..o + din * dout];
            let mut da = Matrix::zeros(batch, din);
            matmul(&delta.data, weight, batch, dout, din, &mut da.data);
            if l > 0 {
                for (d, act) in da.data.iter_mut().zip(&a.data) {
                    if *act <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = da;
            } else {
                input_grad = da;
            }
        }
        Ok((grad, input_grad))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
