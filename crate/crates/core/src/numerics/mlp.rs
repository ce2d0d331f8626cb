//! Fixed-topology multilayer perceptron with hand-derived reverse mode.
//!
//! Parameters live in one flat buffer, layer by layer: the weight matrix
//! (`out × in`, row-major) followed by the bias. Hidden layers apply the
//! activation; the output layer is linear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{ensure_dim, Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Elu,
}

impl Activation {
    #[inline]
    fn apply_slice<T: Scalar>(self, zs: &mut [T]) {
        match self {
            Activation::Tanh => T::tanh_in_place(zs),
            _ => zs.iter_mut().for_each(|z| *z = self.apply(*z)),
        }
    }

    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > T::zero() {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    /// Derivative expressed through the activation output `h`.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, h: T) -> T {
        match self {
            Activation::Tanh => T::one() - h * h,
            Activation::Elu => {
                if h > T::zero() {
                    T::one()
                } else {
                    h + T::one()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Elu => "elu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "elu" => Some(Activation::Elu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<T> {
    layer_sizes: Vec<usize>,
    activation: Activation,
    data: Vec<T>,
}

/// Layer inputs and activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    batch: usize,
    /// `layers[l]` is the input to layer `l`; the last entry is the output.
    layers: Vec<Matrix<T>>,
}

impl<T> MlpCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Domain(
                "an MLP needs at least an input and an output layer, all non-empty".into(),
            ));
        }
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            data: vec![T::zero(); param_count(layer_sizes)],
        })
    }

    pub fn from_flat(layer_sizes: &[usize], activation: Activation, data: Vec<T>) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        ensure_dim("MlpParams::from_flat", p.data.len(), data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("MLP parameters must be finite".into()));
        }
        p.data = data;
        Ok(p)
    }

    /// Glorot-uniform weights, zero biases; the output layer's weights are
    /// multiplied by `output_scale`.
    pub fn glorot<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activation: Activation,
        output_scale: T,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        let n_layers = p.n_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (p.layer_sizes[l], p.layer_sizes[l + 1]);
            let limit: T = lit((6.0 / (fan_in + fan_out) as f64).sqrt());
            let scale = if l + 1 == n_layers { output_scale } else { T::one() };
            for w in p.weight_mut(l) {
                *w = T::uniform(rng, -limit, limit) * scale;
            }
        }
        Ok(p)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty layer sizes")
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// A zero-filled buffer with this network's shape (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.layer_sizes[..=l])
    }

    fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(l);
        start..start + self.layer_sizes[l] * self.layer_sizes[l + 1]
    }

    fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.weight_range(l).end;
        start..start + self.layer_sizes[l + 1]
    }

    /// Row-major `out × in` weights of layer `l`.
    pub fn weight(&self, l: usize) -> &[T] {
        &self.data[self.weight_range(l)]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [T] {
        let r = self.weight_range(l);
        &mut self.data[r]
    }

    pub fn bias(&self, l: usize) -> &[T] {
        &self.data[self.bias_range(l)]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [T] {
        let r = self.bias_range(l);
        &mut self.data[r]
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())
            .map_err(|_| Error::Numeric("MLP input must be finite".into()))?;
        let (out, cache) = self.forward_batch(&x)?;
        Ok((out.into_vec(), cache))
    }

    /// Forward pass over a `batch × input_dim` matrix.
    pub fn forward_batch(&self, inputs: &Matrix<T>) -> Result<(Matrix<T>, MlpCache<T>)> {
        ensure_dim("mlp_forward (input width)", self.input_dim(), inputs.cols())?;
        let batch = inputs.rows();
        let mut layers = Vec::with_capacity(self.layer_sizes.len());
        layers.push(inputs.clone());
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let x = layers.last().expect("input recorded");
            let mut z = Matrix::zeros(batch, n_out);
            let bias = self.bias(l);
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(bias);
            }
            // z += x · Wᵀ
            T::gemm_strided(
                batch,
                n_in,
                n_out,
                T::one(),
                x.as_slice(),
                (n_in, 1),
                self.weight(l),
                (1, n_in),
                T::one(),
                z.as_mut_slice(),
            );
            if l + 1 < self.n_layers() {
                self.activation.apply_slice(z.as_mut_slice());
            }
            layers.push(z);
        }
        let out = layers.last().expect("output recorded").clone();
        Ok((out, MlpCache { batch, layers }))
    }

    /// Forward pass without keeping the cache.
    pub fn predict_batch(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        ensure_dim("mlp_forward (input width)", self.input_dim(), inputs.cols())?;
        let batch = inputs.rows();
        let mut x = inputs.clone();
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let mut z = Matrix::zeros(batch, n_out);
            let bias = self.bias(l);
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(bias);
            }
            T::gemm_strided(
                batch,
                n_in,
                n_out,
                T::one(),
                x.as_slice(),
                (n_in, 1),
                self.weight(l),
                (1, n_in),
                T::one(),
                z.as_mut_slice(),
            );
            if l + 1 < self.n_layers() {
                self.activation.apply_slice(z.as_mut_slice());
            }
            x = z;
        }
        Ok(x)
    }

    pub fn backward(&self, cache: &MlpCache<T>, output_grad: &[T]) -> Result<(MlpParams<T>, Vec<T>)> {
        ensure_dim("mlp_backward (batch)", 1, cache.batch)?;
        let g = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())
            .map_err(|e| match e {
                Error::Dimension { .. } => e,
                _ => Error::Numeric("output gradient must be finite".into()),
            })?;
        let (grads, input_grad) = self.backward_batch(cache, &g)?;
        Ok((grads, input_grad.into_vec()))
    }

    /// Reverse pass; parameter gradients are summed over the batch.
    pub fn backward_batch(
        &self,
        cache: &MlpCache<T>,
        output_grad: &Matrix<T>,
    ) -> Result<(MlpParams<T>, Matrix<T>)> {
        let mut grads = self.zeros_like();
        let input_grad = self.backward_batch_into(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// As [`backward_batch`](Self::backward_batch) but accumulating into `grads`.
    pub fn backward_batch_into(
        &self,
        cache: &MlpCache<T>,
        output_grad: &Matrix<T>,
        grads: &mut MlpParams<T>,
    ) -> Result<Matrix<T>> {
        ensure_dim("mlp_backward (cache layers)", self.layer_sizes.len(), cache.layers.len())?;
        for (l, m) in cache.layers.iter().enumerate() {
            ensure_dim("mlp_backward (cache width)", self.layer_sizes[l], m.cols())?;
            ensure_dim("mlp_backward (cache batch)", cache.batch, m.rows())?;
        }
        ensure_dim("mlp_backward (grad rows)", cache.batch, output_grad.rows())?;
        ensure_dim("mlp_backward (grad width)", self.output_dim(), output_grad.cols())?;
        if !grads.same_shape(self) {
            return Err(Error::dim("mlp_backward (accumulator)", self.num_params(), grads.num_params()));
        }
        let batch = cache.batch;
        let mut g = output_grad.clone();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if l + 1 < self.n_layers() {
                let h = &cache.layers[l + 1];
                let act = self.activation;
                for (gv, &hv) in g.as_mut_slice().iter_mut().zip(h.as_slice()) {
                    *gv *= act.derivative_from_output(hv);
                }
            }
            let x = &cache.layers[l];
            // dW += gᵀ · x
            T::gemm_strided(
                n_out,
                batch,
                n_in,
                T::one(),
                g.as_slice(),
                (1, n_out),
                x.as_slice(),
                (n_in, 1),
                T::one(),
                grads.weight_mut(l),
            );
            let db = grads.bias_mut(l);
            for r in 0..batch {
                for (d, &v) in db.iter_mut().zip(g.row(r)) {
                    *d += v;
                }
            }
            // dx = g · W
            let mut prev = Matrix::zeros(batch, n_in);
            T::gemm(batch, n_out, n_in, T::one(), g.as_slice(), self.weight(l), T::zero(), prev.as_mut_slice());
            g = prev;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(sizes: &[usize], act: Activation, seed: u64) -> MlpParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MlpParams::glorot(sizes, act, 1.0, &mut rng).unwrap();
        for b in 0..p.n_layers() {
            for v in p.bias_mut(b) {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        p
    }

    /// Straightforward per-neuron re-evaluation of the layer formula.
    fn reference_forward(p: &MlpParams<f64>, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..p.n_layers() {
            let (n_in, n_out) = (p.layer_sizes()[l], p.layer_sizes()[l + 1]);
            let w = p.weight(l);
            let b = p.bias(l);
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = b[o];
                for i in 0..n_in {
                    acc += w[o * n_in + i] * h[i];
                }
                z[o] = if l + 1 < p.n_layers() {
                    match p.activation() {
                        Activation::Tanh => acc.tanh(),
                        Activation::Elu => {
                            if acc > 0.0 {
                                acc
                            } else {
                                acc.exp() - 1.0
                            }
                        }
                    }
                } else {
                    acc
                };
            }
            h = z;
        }
        h
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::<f64>::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        let (out, _) = p.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_maps_zero_to_zero() {
        let mut p = MlpParams::<f64>::zeros(&[3, 3, 3], Activation::Tanh).unwrap();
        for l in 0..2 {
            let w = p.weight_mut(l);
            for i in 0..3 {
                w[i * 3 + i] = 1.0;
            }
        }
        let (out, _) = p.forward(&[0.0; 3]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn forward_matches_reference_evaluation() {
        for (seed, act) in [(1, Activation::Tanh), (2, Activation::Elu)] {
            let p = random_net(&[4, 7, 6, 3], act, seed);
            let x = [0.3, -1.2, 0.8, 2.0];
            let (out, _) = p.forward(&x).unwrap();
            let expected = reference_forward(&p, &x);
            for (a, b) in out.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn batch_forward_agrees_with_single() {
        let p = random_net(&[2, 5, 1], Activation::Tanh, 3);
        let x = Matrix::from_vec(3, 2, vec![0.1, 0.2, -1.0, 0.5, 2.0, -2.0]).unwrap();
        let (out, _) = p.forward_batch(&x).unwrap();
        for r in 0..3 {
            let (single, _) = p.forward(x.row(r)).unwrap();
            assert!((single[0] - out[(r, 0)]).abs() < 1e-14);
        }
        assert_eq!(p.predict_batch(&x).unwrap(), out);
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let p = MlpParams::<f64>::zeros(&[3, 2], Activation::Tanh).unwrap();
        assert!(matches!(p.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let p = random_net(&[3, 4, 2], Activation::Tanh, 4);
        let (_, cache) = p.forward(&[0.5, 0.1, -0.3]).unwrap();
        let (g, gx) = p.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_input() {
        let p = MlpParams::<f64>::zeros(&[3, 1], Activation::Tanh).unwrap();
        let x = [0.7, -1.5, 2.5];
        let (_, cache) = p.forward(&x).unwrap();
        let (g, _) = p.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.weight(0), &x);
        assert_eq!(g.bias(0), &[1.0]);
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let p = random_net(&[3, 4, 2], Activation::Tanh, 5);
        let q = random_net(&[3, 5, 2], Activation::Tanh, 5);
        let (_, cache) = q.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(p.backward(&cache, &[1.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let p = random_net(&[5, 8, 8, 2], Activation::Elu, 6);
        let x = [0.1, 0.2, 0.3, -0.4, 0.5];
        let (a, _) = p.forward(&x).unwrap();
        let (b, _) = p.forward(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
