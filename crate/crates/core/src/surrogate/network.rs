use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weights of a fully connected ReLU network with a scalar output.
///
/// All parameters live in one flat buffer. Layer `l` stores its weight
/// matrix (`sizes[l+1] × sizes[l]`, row-major) followed by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) struct ForwardCache {
    /// `activations[l]` is the input of layer `l`; the last entry is the output.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub(crate) fn output(&self) -> ArrayView1<'_, f64> {
        self.activations.last().expect("non-empty cache").column(0)
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl SurrogateParams {
    /// All-zero parameters for layer sizes `[input, hidden…, 1]`.
    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("output layer must have size 1".into()));
        }
        let n = param_count(&sizes);
        Ok(Self { sizes, data: vec![0.0; n] })
    }

    /// Builds parameters from a flat buffer in the layout described above.
    pub fn from_flat(sizes: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        if data.len() != p.data.len() {
            return Err(Error::DimensionMismatch {
                expected: p.data.len(),
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        p.data = data;
        Ok(p)
    }

    /// Fan-in scaled uniform weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(sizes: Vec<usize>, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for l in 0..p.n_layers() {
            let fan_in = p.sizes[l];
            let bound = (6.0 / fan_in as f64).sqrt();
            let (w0, w1) = p.weight_range(l);
            for w in &mut p.data[w0..w1] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Flat index range of layer `l`'s weight matrix.
    pub fn weight_range(&self, layer: usize) -> (usize, usize) {
        let start = self.offset(layer);
        (start, start + self.sizes[layer + 1] * self.sizes[layer])
    }

    /// Flat index range of layer `l`'s bias vector.
    pub fn bias_range(&self, layer: usize) -> (usize, usize) {
        let (_, w1) = self.weight_range(layer);
        (w1, w1 + self.sizes[layer + 1])
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (a, b) = self.weight_range(layer);
        ArrayView2::from_shape((self.sizes[layer + 1], self.sizes[layer]), &self.data[a..b])
            .expect("layout matches sizes")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (a, b) = self.bias_range(layer);
        ArrayView1::from(&self.data[a..b])
    }

    pub fn weights_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let (a, b) = self.weight_range(layer);
        let shape = (self.sizes[layer + 1], self.sizes[layer]);
        ArrayViewMut2::from_shape(shape, &mut self.data[a..b]).expect("layout matches sizes")
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let (a, b) = self.bias_range(layer);
        ArrayViewMut1::from(&mut self.data[a..b])
    }

    /// `½ Σ w²` over weight matrices (biases excluded).
    pub fn weight_norm_sq_half(&self) -> f64 {
        (0..self.n_layers())
            .map(|l| {
                let (a, b) = self.weight_range(l);
                self.data[a..b].iter().map(|w| w * w).sum::<f64>()
            })
            .sum::<f64>()
            * 0.5
    }

    /// Score of one pipeline on one dataset; lower means predicted better.
    pub fn forward(&self, pipeline_vec: &[f64], meta_vec: &[f64]) -> Result<f64> {
        let d = pipeline_vec.len() + meta_vec.len();
        if d != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: d,
            });
        }
        let mut x = Array2::zeros((1, d));
        for (dst, src) in x.iter_mut().zip(pipeline_vec.iter().chain(meta_vec)) {
            *dst = *src;
        }
        Ok(self.forward_batch(x.view())?[0])
    }

    /// Scores every row of an `n × input_dim` matrix.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: inputs.ncols(),
            });
        }
        Ok(self.forward_cached(inputs.to_owned()).output().to_owned())
    }

    pub(crate) fn forward_cached(&self, inputs: Array2<f64>) -> ForwardCache {
        let n = inputs.nrows();
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(inputs);
        for l in 0..self.n_layers() {
            let mut z = Array2::zeros((n, self.sizes[l + 1]));
            general_mat_mul(1.0, &activations[l], &self.weights(l).t(), 0.0, &mut z);
            z += &self.bias(l);
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        ForwardCache { activations }
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output` per row.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: ArrayView1<'_, f64>, grad: &mut SurrogateParams) {
        let n = d_out.len();
        let mut delta = d_out.to_owned().into_shape_with_order((n, 1)).expect("column vector");
        for l in (0..self.n_layers()).rev() {
            let a_prev = &cache.activations[l];
            general_mat_mul(1.0, &delta.t(), a_prev, 1.0, &mut grad.weights_mut(l));
            grad.bias_mut(l).scaled_add(1.0, &delta.sum_axis(Axis(0)));
            if l == 0 {
                break;
            }
            let mut d_prev = Array2::zeros((n, self.sizes[l]));
            general_mat_mul(1.0, &delta, &self.weights(l), 0.0, &mut d_prev);
            // ReLU derivative: the hidden output is positive iff its pre-activation is
            ndarray::Zip::from(&mut d_prev).and(a_prev).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = d_prev;
        }
    }
}
